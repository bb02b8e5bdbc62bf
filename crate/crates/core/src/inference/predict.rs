use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::nhpp::{PowerLawParams, TimeInterval};
use crate::rng;

use super::mcmc::{CompartmentDraws, PosteriorSamples};
use super::InferenceError;

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Smallest value whose empirical CDF reaches `q`. Unlike interpolation it
/// depends only on the empirical distribution, so pooling copies of the same
/// draws changes nothing.
pub fn ecdf_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let rank = (q.clamp(0.0, 1.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Mean of sorted data as Σ v·(multiplicity/n) over distinct values, exact
/// under replication of the sample.
pub fn ecdf_mean(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().position(|&x| x != sorted[i]).map_or(sorted.len(), |d| i + d);
        total += sorted[i] * ((j - i) as f64 / n);
        i = j;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub quantiles: Vec<f64>,
    /// Quantiles of the expected count Λ(t1, t2) across draws.
    pub lambda: Vec<f64>,
    /// Quantiles of the simulated counts.
    pub counts: Vec<f64>,
    pub lambda_mean: f64,
    pub count_mean: f64,
}

pub fn posterior_predictive_counts(
    samples: &PosteriorSamples,
    key: &str,
    interval: &TimeInterval,
    quantiles: &[f64],
    seed: u64,
) -> Result<PredictiveSummary, InferenceError> {
    let draws = samples.compartment(key).ok_or_else(|| InferenceError::UnknownCompartment(key.to_string()))?;
    predictive_counts(draws, interval, quantiles, seed)
}

/// For each draw compute Λ over the window and sample one Poisson count.
pub fn predictive_counts(
    draws: &CompartmentDraws,
    interval: &TimeInterval,
    quantiles: &[f64],
    seed: u64,
) -> Result<PredictiveSummary, InferenceError> {
    if draws.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    let mut lambdas = Vec::with_capacity(draws.len());
    let mut counts = Vec::with_capacity(draws.len());
    for (i, lp) in draws.log_params().enumerate() {
        let p = lp.to_params()?;
        let lam = p.lambda_between(interval.start(), interval.end());
        let mut r = rng::stream(seed, 0, i as u64, 0);
        let n = if lam > 0.0 {
            Poisson::new(lam).map_err(|e| InferenceError::Config(format!("Poisson mean {lam}: {e}")))?.sample(&mut r)
        } else {
            0.0
        };
        lambdas.push(lam);
        counts.push(n);
    }
    lambdas.sort_by(f64::total_cmp);
    counts.sort_by(f64::total_cmp);
    Ok(PredictiveSummary {
        quantiles: quantiles.to_vec(),
        lambda: quantiles.iter().map(|&q| ecdf_quantile(&lambdas, q)).collect(),
        counts: quantiles.iter().map(|&q| ecdf_quantile(&counts, q)).collect(),
        lambda_mean: ecdf_mean(&lambdas),
        count_mean: ecdf_mean(&counts),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: f64,
    pub mean: f64,
    pub quantiles: Vec<f64>,
}

/// Cumulative expected count from `start` to each of `times`, summarized
/// across draws.
pub fn predictive_curve(
    draws: &CompartmentDraws,
    start: f64,
    times: &[f64],
    quantiles: &[f64],
) -> Result<Vec<CurvePoint>, InferenceError> {
    let params: Vec<PowerLawParams> = draws.log_params().map(|lp| lp.to_params()).collect::<Result<_, _>>()?;
    if params.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    Ok(times
        .iter()
        .map(|&t| {
            let mut v: Vec<f64> = params.iter().map(|p| p.lambda_between(start, t)).collect();
            v.sort_by(f64::total_cmp);
            CurvePoint { time: t, mean: ecdf_mean(&v), quantiles: quantiles.iter().map(|&q| ecdf_quantile(&v, q)).collect() }
        })
        .collect())
}
