//! Expected age of the k-th defect at the closing inspection of a window.
//!
//! `Ā_k(t1, t2) = E[(t2 − T_k)·1{T_k ≤ t2}]`, where `T_k` is the k-th arrival
//! after `t1`. The closed form expands `(y − a·t1^b)^(k−1)` binomially and
//! integrates each power against `y^(1/b) e^(−y)`, which leaves an alternating
//! sum of incomplete gammas with shapes `k − i + 1/b`. Each term is built in
//! log space; when the predicted rounding error of the sum is too large the
//! age is integrated numerically instead.

use serde::{Deserialize, Serialize};

use super::quadrature::{integrate, Tolerance};
use super::special::{ln_factorial, ln_gamma, ln_regularized_gamma_diff, regularized_pair};
use super::{ArrivalIndex, NhppError, PowerLawParams, TimeInterval};

/// Largest tolerated ratio between the rounding error carried by the
/// alternating sum and one ulp of its result.
pub const AGE_STABILITY_LIMIT: f64 = 1e8;

/// Hard cap on the number of age terms summed per window.
pub const MAX_AGE_TERMS: u32 = 10_000;

const CROSS_CHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeEstimate {
    pub value: f64,
    pub method: AgeMethod,
}

/// Result of summing `f(Ā_ℓ)` over `ℓ = 1..L`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgeCostSum {
    pub value: f64,
    pub terms: u32,
    pub quadrature_terms: u32,
    pub capped: bool,
}

/// Per-window state shared by successive `k`: the incomplete-gamma
/// differences `J_j = γ(j + 1/b, x2) − γ(j + 1/b, x1)` are reused by every
/// `k ≥ j`.
pub(crate) struct AgeSeries {
    t1: f64,
    t2: f64,
    x1: f64,
    x2: f64,
    lam: f64,
    inv_b: f64,
    ln_a: f64,
    ln_t2: f64,
    ln_x1: f64,
    // (ln J_j, amplification of rounding in the difference), index j - 1
    j_terms: Vec<(f64, f64)>,
    ln_fact: Vec<f64>,
}

impl AgeSeries {
    pub(crate) fn new(params: &PowerLawParams, interval: &TimeInterval) -> Self {
        let (t1, t2) = (interval.start(), interval.end());
        let x1 = params.cumulative_from_launch(t1);
        let x2 = params.cumulative_from_launch(t2);
        Self {
            t1,
            t2,
            x1,
            x2,
            lam: params.lambda_between(t1, t2),
            inv_b: 1.0 / params.b(),
            ln_a: params.a().ln(),
            ln_t2: t2.ln(),
            ln_x1: if x1 > 0.0 { x1.ln() } else { f64::NEG_INFINITY },
            j_terms: Vec::new(),
            ln_fact: vec![0.0],
        }
    }

    fn ensure_tables(&mut self, k: usize) -> Result<(), NhppError> {
        while self.ln_fact.len() < k {
            let n = self.ln_fact.len() as u64;
            self.ln_fact.push(ln_factorial(n));
        }
        while self.j_terms.len() < k {
            let s = (self.j_terms.len() + 1) as f64 + self.inv_b;
            let (ln_diff, amp) = ln_regularized_gamma_diff(s, self.x1, self.x2)?;
            self.j_terms.push((ln_diff + ln_gamma(s), amp));
        }
        Ok(())
    }

    /// `F_k(t2)`, the probability that the k-th arrival falls in the window.
    fn arrival_probability(&self, k: u32) -> Result<(f64, f64), NhppError> {
        let r = regularized_pair(f64::from(k), self.lam)?;
        Ok((r.p, r.ln_p))
    }

    /// Closed form, or `None` when cancellation makes it untrustworthy.
    pub(crate) fn closed_form(&mut self, k: u32) -> Result<Option<f64>, NhppError> {
        let ku = k as usize;
        self.ensure_tables(ku)?;
        let (prob, ln_prob) = self.arrival_probability(k)?;
        if prob == 0.0 && ln_prob == f64::NEG_INFINITY {
            return Ok(Some(0.0));
        }
        let ln_lead = self.ln_t2 + ln_prob;
        let lead_weight = 4.0 + self.ln_t2.abs() + ln_prob.abs();

        let base = self.x1 - self.ln_a * self.inv_b;
        let base_mag = self.x1.abs() + (self.ln_a * self.inv_b).abs();
        let n_terms = if self.x1 > 0.0 { ku } else { 1 };
        let mut logs = Vec::with_capacity(n_terms);
        for i in 0..n_terms {
            let (ln_j, amp) = self.j_terms[ku - 1 - i];
            if ln_j == f64::NEG_INFINITY {
                continue;
            }
            let power = if i == 0 { 0.0 } else { i as f64 * self.ln_x1 };
            let ln_term = base - self.ln_fact[i] - self.ln_fact[ku - 1 - i] + power + ln_j;
            let weight = 4.0
                + amp
                + base_mag
                + self.ln_fact[i]
                + self.ln_fact[ku - 1 - i]
                + power.abs()
                + ln_j.abs();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            logs.push((ln_term, sign, weight));
        }

        let ln_max = logs.iter().map(|&(l, _, _)| l).fold(ln_lead, f64::max);
        let lead = (ln_lead - ln_max).exp();
        let mut acc = lead;
        let mut err = lead * lead_weight;
        for &(l, sign, w) in &logs {
            let m = (l - ln_max).exp();
            acc -= sign * m;
            err += m * w;
        }
        if !(acc > 0.0) || err > AGE_STABILITY_LIMIT * acc {
            return Ok(None);
        }
        let value = acc * ln_max.exp();
        let upper = (self.t2 - self.t1) * prob;
        if !value.is_finite() || value > upper * (1.0 + 1e-9) {
            return Ok(None);
        }
        Ok(Some(value))
    }

    /// Integrate `(t2 − t)` against the k-th arrival density, after the
    /// substitution `u = Λ(t1, t)` which turns the density into Gamma(k, 1).
    pub(crate) fn quadrature(&self, k: u32) -> Result<f64, NhppError> {
        if self.lam <= 0.0 {
            return Ok(0.0);
        }
        let km1 = f64::from(k - 1);
        let ln_norm = ln_gamma(f64::from(k));
        let (lam, x2, t2, inv_b) = (self.lam, self.x2, self.t2, self.inv_b);
        let integrand = |u: f64| {
            let delta = (lam - u) / x2;
            if delta <= 0.0 {
                return 0.0;
            }
            let age = -t2 * ((-delta).ln_1p() * inv_b).exp_m1();
            let shape = if k == 1 { 0.0 } else { km1 * u.ln() };
            age * (shape - u - ln_norm).exp()
        };
        let sd = f64::from(k).sqrt();
        // Panels must be narrow enough near the Gamma bulk for the rule's
        // nodes to see it; the tail cuts widen geometrically.
        let breaks = [
            km1 - 8.0 * sd,
            km1 - 3.0 * sd,
            km1,
            km1 + 3.0 * sd,
            km1 + 8.0 * sd,
            km1 + 16.0 * sd,
            km1 + 32.0 * sd,
            km1 + 64.0 * sd,
        ];
        let tol = Tolerance { abs: 1e-300, rel: 1e-11, max_subdivisions: 4_000 };
        match integrate(integrand, 0.0, lam, &breaks, tol) {
            Ok(q) => Ok(q.value.max(0.0)),
            // Relative accuracy was out of reach, but the absolute floor
            // of the integrator is still met.
            Err(NhppError::QuadratureFailed { value, error }) if error <= 1e-10 => Ok(value.max(0.0)),
            Err(e) => Err(e),
        }
    }

    pub(crate) fn age(&mut self, k: u32) -> Result<AgeEstimate, NhppError> {
        match self.closed_form(k)? {
            Some(value) => Ok(AgeEstimate { value, method: AgeMethod::ClosedForm }),
            None => {
                log::debug!("expected age k={k}: closed form unstable, integrating numerically");
                Ok(AgeEstimate { value: self.quadrature(k)?, method: AgeMethod::Quadrature })
            }
        }
    }
}

/// Expected age of the k-th defect found at `interval.end()`.
pub fn expected_defect_age(
    params: &PowerLawParams,
    interval: &TimeInterval,
    k: ArrivalIndex,
) -> Result<AgeEstimate, NhppError> {
    AgeSeries::new(params, interval).age(k.get())
}

/// Numerical integration of the age integral, bypassing the closed form.
pub fn expected_defect_age_quadrature(
    params: &PowerLawParams,
    interval: &TimeInterval,
    k: ArrivalIndex,
) -> Result<f64, NhppError> {
    AgeSeries::new(params, interval).quadrature(k.get())
}

/// Evaluates both routes and reports [`NhppError::NumericInstability`] when
/// the closed form is admissible yet disagrees with the integral.
pub fn expected_defect_age_checked(
    params: &PowerLawParams,
    interval: &TimeInterval,
    k: ArrivalIndex,
) -> Result<AgeEstimate, NhppError> {
    let mut series = AgeSeries::new(params, interval);
    let quad = series.quadrature(k.get())?;
    match series.closed_form(k.get())? {
        Some(cf) => {
            let scale = cf.abs().max(quad.abs());
            if scale > 0.0 && (cf - quad).abs() > CROSS_CHECK_TOLERANCE * scale {
                return Err(NhppError::NumericInstability { closed_form: cf, quadrature: quad });
            }
            Ok(AgeEstimate { value: cf, method: AgeMethod::ClosedForm })
        }
        None => Ok(AgeEstimate { value: quad, method: AgeMethod::Quadrature }),
    }
}

/// `Ā_1 … Ā_n` for one window.
pub fn expected_defect_ages(
    params: &PowerLawParams,
    interval: &TimeInterval,
    n: u32,
) -> Result<Vec<AgeEstimate>, NhppError> {
    let mut series = AgeSeries::new(params, interval);
    (1..=n).map(|k| series.age(k)).collect()
}

/// `Σ_ℓ f(Ā_ℓ)`, stopping at the first term with
/// `f(Ā_L) < tol·(running sum + tol)` or after [`MAX_AGE_TERMS`] terms.
pub fn expected_total_age_cost<F: Fn(f64) -> f64>(
    params: &PowerLawParams,
    interval: &TimeInterval,
    repair_fn: F,
    tol: f64,
) -> Result<AgeCostSum, NhppError> {
    if !(tol > 0.0) {
        return Err(NhppError::Domain(format!("age-sum tolerance must be positive, got {tol}")));
    }
    let mut series = AgeSeries::new(params, interval);
    let mut out = AgeCostSum::default();
    for k in 1..=MAX_AGE_TERMS {
        let age = series.age(k)?;
        if age.method == AgeMethod::Quadrature {
            out.quadrature_terms += 1;
        }
        let term = repair_fn(age.value);
        out.value += term;
        out.terms = k;
        if term < tol * (out.value + tol) {
            return Ok(out);
        }
    }
    out.capped = true;
    log::warn!(
        "age-cost sum hit the {MAX_AGE_TERMS}-term cap on [{}, {}] (Λ = {:.3})",
        interval.start(),
        interval.end(),
        series.lam
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64) -> PowerLawParams {
        PowerLawParams::new(a, b).unwrap()
    }
    fn iv(t1: f64, t2: f64) -> TimeInterval {
        TimeInterval::new(t1, t2).unwrap()
    }
    fn k(n: u32) -> ArrivalIndex {
        ArrivalIndex::new(n).unwrap()
    }

    #[test]
    fn homogeneous_first_arrival_age() {
        // ∫₀¹ (1 − t) e^(−t) dt = e^(−1)
        let est = expected_defect_age(&p(1.0, 1.0), &iv(0.0, 1.0), k(1)).unwrap();
        assert_eq!(est.method, AgeMethod::ClosedForm);
        assert!((est.value - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn late_arrivals_are_young() {
        let a1 = expected_defect_age(&p(1.0, 1.0), &iv(0.0, 1.0), k(1)).unwrap().value;
        let a10 = expected_defect_age(&p(1.0, 1.0), &iv(0.0, 1.0), k(10)).unwrap().value;
        assert!(a10 < a1 && a10 < 1e-4 && a10 > 0.0);
    }

    #[test]
    fn closed_form_and_quadrature_agree_with_offset_start() {
        let params = p(0.05, 1.4);
        let w = iv(6.0, 18.0);
        for n in 1..=6 {
            let cf = expected_defect_age(&params, &w, k(n)).unwrap();
            let q = expected_defect_age_quadrature(&params, &w, k(n)).unwrap();
            assert!((cf.value / q - 1.0).abs() < 1e-8, "k={n}: {} vs {q}", cf.value);
            assert!(expected_defect_age_checked(&params, &w, k(n)).is_ok());
        }
    }

    #[test]
    fn cancellation_triggers_fallback() {
        // a·t1^b ≈ 250 makes the binomial terms enormous relative to the result.
        let params = p(0.5, 1.2);
        let w = iv(150.0, 151.0);
        let est = expected_defect_age(&params, &w, k(12)).unwrap();
        assert_eq!(est.method, AgeMethod::Quadrature);
        assert!(est.value > 0.0 && est.value <= 1.0);
    }

    #[test]
    fn ages_decrease_in_k_and_stay_in_window() {
        let params = p(0.2, 0.7);
        let w = iv(0.0, 24.0);
        let ages = expected_defect_ages(&params, &w, 15).unwrap();
        for pair in ages.windows(2) {
            assert!(pair[1].value < pair[0].value);
        }
        assert!(ages.iter().all(|a| a.value >= 0.0 && a.value <= 24.0));
    }

    #[test]
    fn total_cost_edge_cases() {
        let zero = expected_total_age_cost(&p(0.3, 1.2), &iv(0.0, 10.0), |_| 0.0, 1e-9).unwrap();
        assert_eq!(zero.value, 0.0);
        assert_eq!(zero.terms, 1);
        let tiny = expected_total_age_cost(&p(1e-9, 1.0), &iv(0.0, 1.0), |a| a, 1e-9).unwrap();
        assert!(tiny.value < 1e-8 && tiny.value >= 0.0);
        assert!(expected_total_age_cost(&p(1.0, 1.0), &iv(0.0, 1.0), |a| a, 0.0).is_err());
    }

    #[test]
    fn linear_cost_sum_matches_integrated_intensity() {
        // Σ_ℓ Ā_ℓ = ∫ (t2 − t) λ(t) dt, which for b = 1 is a·L²/2.
        let s = expected_total_age_cost(&p(1.0, 1.0), &iv(0.0, 1.0), |a| a, 1e-12).unwrap();
        assert!((s.value - 0.5).abs() < 1e-9, "{}", s.value);
        let s = expected_total_age_cost(&p(0.7, 1.0), &iv(5.0, 9.0), |a| a, 1e-12).unwrap();
        assert!((s.value - 0.7 * 8.0).abs() < 1e-8, "{}", s.value);
    }

    #[test]
    fn cap_is_reported() {
        // Λ ≈ 20000 needs far more than the cap.
        let s = expected_total_age_cost(&p(2_000.0, 1.0), &iv(0.0, 10.0), |a| a, 1e-9).unwrap();
        assert!(s.capped);
        assert_eq!(s.terms, MAX_AGE_TERMS);
    }
}
