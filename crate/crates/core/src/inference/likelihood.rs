use serde::{Deserialize, Serialize};

use crate::fleet::{CompartmentHistory, FleetDataset};
use crate::nhpp::{ln_poisson_pmf, NhppError, PowerLawParams};

use super::InferenceError;

/// `(ln a, ln b)`, the unconstrained working coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogParams {
    pub ln_a: f64,
    pub ln_b: f64,
}

impl LogParams {
    pub fn new(ln_a: f64, ln_b: f64) -> Result<Self, InferenceError> {
        if !(ln_a.is_finite() && ln_b.is_finite()) {
            return Err(InferenceError::Config(format!("log parameters must be finite, got ({ln_a}, {ln_b})")));
        }
        Ok(Self { ln_a, ln_b })
    }

    pub fn to_params(self) -> Result<PowerLawParams, NhppError> {
        PowerLawParams::from_log(self.ln_a, self.ln_b)
    }

    pub fn from_params(p: &PowerLawParams) -> Self {
        Self { ln_a: p.a().ln(), ln_b: p.b().ln() }
    }
}

/// Independent Normal priors on `ln a` and `ln b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub mean_ln_a: f64,
    pub sd_ln_a: f64,
    pub mean_ln_b: f64,
    pub sd_ln_b: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self { mean_ln_a: -7.0, sd_ln_a: 5.0, mean_ln_b: 0.0, sd_ln_b: 3.0 }
    }
}

impl Priors {
    /// Priors so wide that they only keep the posterior proper.
    pub fn flat() -> Self {
        Self { mean_ln_a: 0.0, sd_ln_a: 1e3, mean_ln_b: 0.0, sd_ln_b: 1e3 }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let ok = |m: f64, s: f64| m.is_finite() && s > 0.0 && s.is_finite();
        if !ok(self.mean_ln_a, self.sd_ln_a) || !ok(self.mean_ln_b, self.sd_ln_b) {
            return Err(InferenceError::Config(format!("invalid priors {self:?}")));
        }
        Ok(())
    }

    pub fn ln_density(&self, lp: LogParams) -> f64 {
        ln_normal(lp.ln_a, self.mean_ln_a, self.sd_ln_a) + ln_normal(lp.ln_b, self.mean_ln_b, self.sd_ln_b)
    }
}

/// Normal hyperpriors on the population means and Uniform hyperpriors on the
/// population standard deviations of `ln a` and `ln b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperPriors {
    pub m_ln_a: f64,
    pub s_ln_a: f64,
    pub l_ln_a: f64,
    pub u_ln_a: f64,
    pub m_ln_b: f64,
    pub s_ln_b: f64,
    pub l_ln_b: f64,
    pub u_ln_b: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self { m_ln_a: -7.0, s_ln_a: 4.0, l_ln_a: 0.0, u_ln_a: 5.0, m_ln_b: -2.0, s_ln_b: 2.0, l_ln_b: 0.0, u_ln_b: 3.0 }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let ok = |m: f64, s: f64, l: f64, u: f64| m.is_finite() && s > 0.0 && s.is_finite() && l >= 0.0 && l < u && u.is_finite();
        if !ok(self.m_ln_a, self.s_ln_a, self.l_ln_a, self.u_ln_a) || !ok(self.m_ln_b, self.s_ln_b, self.l_ln_b, self.u_ln_b) {
            return Err(InferenceError::Config(format!("invalid hyperpriors {self:?}")));
        }
        Ok(())
    }
}

pub(crate) fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Poisson log-likelihood of every recorded interval; negative infinity
/// when an interval with defects has zero expected count.
pub fn log_likelihood(params: &PowerLawParams, history: &CompartmentHistory) -> f64 {
    history.intervals().map(|(t0, t1, n)| ln_poisson_pmf(params.lambda_between(t0, t1), n)).sum()
}

/// Sum of [`log_likelihood`] over every compartment of the fleet.
pub fn pooled_log_likelihood(params: &PowerLawParams, dataset: &FleetDataset) -> f64 {
    dataset.compartments().iter().map(|h| log_likelihood(params, h)).sum()
}

/// Unnormalized log posterior in log-parameter space.
pub fn log_posterior(lp: LogParams, history: &CompartmentHistory, priors: &Priors) -> f64 {
    let prior = priors.ln_density(lp);
    match lp.to_params() {
        Ok(p) => log_likelihood(&p, history) + prior,
        Err(_) => f64::NEG_INFINITY,
    }
}

pub(crate) fn pooled_log_posterior(lp: LogParams, dataset: &FleetDataset, priors: &Priors) -> f64 {
    let prior = priors.ln_density(lp);
    match lp.to_params() {
        Ok(p) => pooled_log_likelihood(&p, dataset) + prior,
        Err(_) => f64::NEG_INFINITY,
    }
}
