use std::path::{Path, PathBuf};

use coatplan::economics::{CostConfig, ParameterUsage};
use coatplan::inference::{HyperPriors, MCMCConfig, MleOptions, Priors};
use coatplan::planner::{GAConfig, PlannerKind, SweepAxis};
use coatplan::simulator::{AgeAccounting, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Failure, ResultExt};

/// Everything a run depends on. Written verbatim into every output so an
/// artifact can be traced back to the settings that produced it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: DataSection,
    pub model: ModelSection,
    pub cost: CostConfig,
    pub horizon: HorizonSection,
    pub planner: PlannerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Inspection records CSV.
    pub path: Option<PathBuf>,
    /// Posterior draws written by `fit`.
    pub samples: Option<PathBuf>,
    /// Explicit parameters: `ship_id,compartment_id,a,b[,group]`.
    pub params: Option<PathBuf>,
    pub out: PathBuf,
    /// Records after this age are held out of fitting and used to validate.
    pub cutoff: Option<f64>,
    pub synth: SynthConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { path: None, samples: None, params: None, out: PathBuf::from("."), cutoff: None, synth: SynthConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Mle,
    Bayes,
    Hier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mode: FitKind,
    pub priors: Priors,
    pub hyperpriors: HyperPriors,
    /// Centre the hyperprior means on a flat-prior pooled fit first.
    pub hyperpriors_from_pooled: bool,
    pub mcmc: MCMCConfig,
    pub mle: MleOptions,
    pub parameter_usage: ParameterUsage,
    pub quantiles: Vec<f64>,
    /// Months ahead covered by predicted-count curves.
    pub prediction_window: f64,
    pub prediction_step: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            mode: FitKind::Bayes,
            priors: Priors::default(),
            hyperpriors: HyperPriors::default(),
            hyperpriors_from_pooled: false,
            mcmc: MCMCConfig::default(),
            mle: MleOptions::default(),
            parameter_usage: ParameterUsage::PointEstimate,
            quantiles: vec![0.05, 0.5, 0.95],
            prediction_window: 60.0,
            prediction_step: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSection {
    pub t_now: f64,
    pub t_end: f64,
    pub delta_t: f64,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self { t_now: 0.0, t_end: 240.0, delta_t: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub kind: PlannerKind,
    pub ga: GAConfig,
    /// Rate bands for the schedule planner when the data carry no group labels.
    pub n_groups: usize,
    pub interval_by_group: bool,
    pub practice_intervals: Vec<f64>,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub simulation_paths: usize,
    pub accounting: AgeAccounting,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            kind: PlannerKind::Interval,
            ga: GAConfig::default(),
            n_groups: 10,
            interval_by_group: false,
            practice_intervals: vec![12.0, 24.0, 30.0, 60.0],
            sweep_axis: SweepAxis::Beta,
            sweep_values: vec![0.8, 1.0, 1.25, 1.5],
            simulation_paths: 10_000,
            accounting: AgeAccounting::Realized,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).config_err(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).config_err(|| format!("parsing config {}", path.display()))
    }

    /// Push the global seed into every stochastic component.
    pub fn propagate_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.model.mcmc.seed = seed;
            self.model.mle.seed = seed;
            self.planner.ga.seed = seed;
        }
    }

    pub fn require_seed(&self, what: &str) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::config(format!("{what} is stochastic and needs --seed")))
    }
}
