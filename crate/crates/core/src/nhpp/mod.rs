//! Power-law non-homogeneous Poisson process kernel.
//!
//! Defects arrive with intensity `λ(t) = a·b·t^(b−1)` where `t` is the ship
//! age in months. Everything here is a pure function of its arguments.

mod age;
pub mod quadrature;
pub mod special;

pub use age::{
    expected_defect_age, expected_defect_age_checked, expected_defect_age_quadrature,
    expected_defect_ages, expected_total_age_cost, AgeCostSum, AgeEstimate, AgeMethod,
    AGE_STABILITY_LIMIT, MAX_AGE_TERMS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{ln_factorial, ln_gamma, regularized_lower_gamma};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NhppError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{0} did not converge")]
    NotConverged(&'static str),
    #[error("quadrature did not reach tolerance (value {value:e}, error estimate {error:e})")]
    QuadratureFailed { value: f64, error: f64 },
    #[error("closed-form and quadrature expected ages disagree: {closed_form:e} vs {quadrature:e}")]
    NumericInstability { closed_form: f64, quadrature: f64 },
}

/// Scale `a` and shape `b` of the power-law intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PowerLawParams {
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct RawParams {
    a: f64,
    b: f64,
}

impl TryFrom<RawParams> for PowerLawParams {
    type Error = NhppError;
    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        Self::new(raw.a, raw.b)
    }
}

impl PowerLawParams {
    pub fn new(a: f64, b: f64) -> Result<Self, NhppError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(NhppError::Domain(format!("scale a must be positive and finite, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(NhppError::Domain(format!("shape b must be positive and finite, got {b}")));
        }
        Ok(Self { a, b })
    }

    pub fn from_log(ln_a: f64, ln_b: f64) -> Result<Self, NhppError> {
        Self::new(ln_a.exp(), ln_b.exp())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `a·t^b`, the cumulative intensity from launch.
    pub fn cumulative_from_launch(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.a * t.powf(self.b)
        }
    }

    /// `Λ(t1, t2)` without interval validation; `t1 ≤ t2` is assumed.
    pub(crate) fn lambda_between(&self, t1: f64, t2: f64) -> f64 {
        if t2 <= t1 {
            return 0.0;
        }
        if t1 <= 0.0 {
            return self.cumulative_from_launch(t2);
        }
        // a·t2^b·(1 − (t1/t2)^b) avoids cancelling two large powers.
        -self.cumulative_from_launch(t2) * (self.b * (t1 / t2).ln()).exp_m1()
    }

    /// Time at which the cumulative intensity from launch reaches `x`.
    pub(crate) fn time_at_cumulative(&self, x: f64) -> f64 {
        (x / self.a).powf(1.0 / self.b)
    }
}

/// Half-open observation window `(t1, t2]` in months since launch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    t1: f64,
    t2: f64,
}

impl TimeInterval {
    pub fn new(t1: f64, t2: f64) -> Result<Self, NhppError> {
        if !(t1 >= 0.0 && t1.is_finite() && t2.is_finite() && t1 < t2) {
            return Err(NhppError::Domain(format!("invalid interval [{t1}, {t2}]")));
        }
        Ok(Self { t1, t2 })
    }

    pub fn start(&self) -> f64 {
        self.t1
    }

    pub fn end(&self) -> f64 {
        self.t2
    }

    pub fn length(&self) -> f64 {
        self.t2 - self.t1
    }
}

/// Ordinal `k ≥ 1` of a defect arrival after a reference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArrivalIndex(u32);

impl ArrivalIndex {
    pub fn new(k: u32) -> Result<Self, NhppError> {
        if k == 0 {
            return Err(NhppError::Domain("arrival index starts at 1".into()));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// `λ(t) = a·b·t^(b−1)`; defined for `t > 0` only.
pub fn intensity(params: &PowerLawParams, t: f64) -> Result<f64, NhppError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(NhppError::Domain(format!("intensity needs t > 0, got {t}")));
    }
    Ok(params.a * params.b * t.powf(params.b - 1.0))
}

/// `Λ(t1, t2) = a·(t2^b − t1^b)`, the expected defect count in the window.
pub fn cumulative_intensity(params: &PowerLawParams, interval: &TimeInterval) -> f64 {
    params.lambda_between(interval.t1, interval.t2)
}

/// Natural log of the Poisson probability of `n` arrivals in the window.
pub fn ln_count_pmf(params: &PowerLawParams, interval: &TimeInterval, n: u64) -> f64 {
    ln_poisson_pmf(cumulative_intensity(params, interval), n)
}

/// Probability of exactly `n` arrivals in the window.
pub fn count_pmf(params: &PowerLawParams, interval: &TimeInterval, n: u64) -> f64 {
    ln_count_pmf(params, interval, n).exp()
}

// Loader's saddle-point form: exact-ish for huge n where the naive
// `n ln m − m − ln n!` loses digits to cancellation.
pub(crate) fn ln_poisson_pmf(mean: f64, n: u64) -> f64 {
    if n == 0 {
        return -mean;
    }
    if mean <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let x = n as f64;
    -0.5 * (2.0 * std::f64::consts::PI * x).ln() - stirling_error(n) - deviance_term(x, mean)
}

// ln n! − [(n + ½) ln n − n + ½ ln 2π]
fn stirling_error(n: u64) -> f64 {
    let x = n as f64;
    if n <= 15 {
        return ln_factorial(n) - (x + 0.5) * x.ln() + x - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let x2 = x * x;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * x2)) / x2) / x2) / x2) / x
}

// x ln(x/m) + m − x, by series when x is close to m
fn deviance_term(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut sum = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = sum + ej / f64::from(2 * j + 1);
            if next == sum {
                return sum;
            }
            sum = next;
        }
        return sum;
    }
    x * (x / m).ln() + m - x
}

/// CDF of the k-th arrival after `t1`: `γ(k, Λ(t1, t)) / (k−1)!`.
pub fn kth_arrival_cdf(
    params: &PowerLawParams,
    t1: f64,
    k: ArrivalIndex,
    t: f64,
) -> Result<f64, NhppError> {
    if !(t1 >= 0.0 && t >= t1 && t.is_finite()) {
        return Err(NhppError::Domain(format!("k-th arrival CDF needs 0 ≤ t1 ≤ t, got t1={t1}, t={t}")));
    }
    regularized_lower_gamma(f64::from(k.get()), params.lambda_between(t1, t))
}

/// Density of the k-th arrival after `t1`.
pub fn kth_arrival_pdf(
    params: &PowerLawParams,
    t1: f64,
    k: ArrivalIndex,
    t: f64,
) -> Result<f64, NhppError> {
    if !(t1 >= 0.0 && t > t1 && t.is_finite()) {
        return Err(NhppError::Domain(format!("k-th arrival density needs 0 ≤ t1 < t, got t1={t1}, t={t}")));
    }
    let rate = intensity(params, t)?;
    let lam = params.lambda_between(t1, t);
    let km1 = f64::from(k.get() - 1);
    let ln_shape = if k.get() == 1 { 0.0 } else { km1 * lam.ln() - ln_gamma(km1 + 1.0) };
    Ok((ln_shape - lam).exp() * rate)
}
