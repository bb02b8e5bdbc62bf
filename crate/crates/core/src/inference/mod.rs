//! Fitting the power-law process to interval-censored counts: likelihoods,
//! maximum likelihood, individual and hierarchical Bayesian MCMC,
//! convergence diagnostics and posterior prediction.

mod diagnostics;
mod hier;
mod io;
mod likelihood;
mod mcmc;
mod mle;
mod predict;

use thiserror::Error;

use crate::fleet::FleetDataset;
use crate::nhpp::NhppError;

pub use diagnostics::{param_diagnostics, Diagnostics, ParamDiagnostics, ESS_FLOOR, RHAT_LIMIT};
pub use hier::fit_bayes_hierarchical;
pub use io::{posterior_summary, read_samples_csv, summarize, write_samples_csv, ParamSummary};
pub use likelihood::{log_likelihood, log_posterior, pooled_log_likelihood, HyperPriors, LogParams, Priors};
pub use mcmc::{
    fit_bayes_individual, fit_bayes_pooled, hyperpriors_from_pooled, replay_transition, ChainInfo, CompartmentDraws,
    FitMode, HyperDraws, MCMCConfig, PosteriorSamples,
};
pub use mle::{fit_mle, fit_mle_pooled, nelder_mead, MleFit, MleOptions, SimplexResult, LN_A_BOUNDS, LN_B_BOUNDS};
pub use predict::{posterior_predictive_counts, predictive_counts, predictive_curve, ecdf_mean, ecdf_quantile, quantile, CurvePoint, PredictiveSummary};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no data to fit")]
    EmptyData,
    #[error("compartment {0} not found in the samples")]
    UnknownCompartment(String),
    #[error("malformed samples file: {0}")]
    Format(String),
    #[error(transparent)]
    Nhpp(#[from] NhppError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Individual fits of every compartment, merged into one sample set.
/// Compartment `i` samples with seed `seed + i·2^32`.
pub fn fit_bayes_individual_all(
    dataset: &FleetDataset,
    priors: &Priors,
    cfg: &MCMCConfig,
) -> Result<PosteriorSamples, InferenceError> {
    if dataset.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    let mut merged: Option<PosteriorSamples> = None;
    for (i, h) in dataset.compartments().iter().enumerate() {
        let local = MCMCConfig { seed: cfg.seed.wrapping_add((i as u64) << 32), ..*cfg };
        let s = fit_bayes_individual(h, priors, &local)?;
        match merged.as_mut() {
            None => merged = Some(PosteriorSamples { config: *cfg, ..s }),
            Some(m) => {
                m.compartments.extend(s.compartments);
                m.chain_info.extend(s.chain_info);
            }
        }
    }
    let mut out = merged.expect("dataset is nonempty");
    out.compute_diagnostics();
    Ok(out)
}
