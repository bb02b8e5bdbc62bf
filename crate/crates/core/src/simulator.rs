//! Monte-Carlo counterpart of the analytic model.
//!
//! Arrival paths are drawn exactly by mapping unit-rate Poisson arrivals
//! through the inverse cumulative intensity. Path `i` of compartment `m`
//! always uses the random stream `(seed, m, i)`, so results do not depend on
//! how paths are spread across threads.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{repair_cost, CostConfig, FleetModel};
use crate::fleet::{CompartmentHistory, FleetDataError, FleetDataset};
use crate::nhpp::{PowerLawParams, TimeInterval};
use crate::plan::{PlanError, PlanningHorizon, SchedulePlan, Unit};
use crate::rng;

// Paths per reduction block; block sums are combined in index order.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalPath {
    pub times: Vec<f64>,
}

/// Arrivals in `interval` drawn from `rng`.
pub fn sample_arrivals<R: Rng + ?Sized>(params: &PowerLawParams, interval: &TimeInterval, rng: &mut R) -> ArrivalPath {
    let base = params.cumulative_from_launch(interval.start());
    let total = params.lambda_between(interval.start(), interval.end());
    let mut times = Vec::new();
    let mut u = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        u += gap;
        if u > total {
            break;
        }
        let t = params.time_at_cumulative(base + u).clamp(interval.start(), interval.end());
        // Rounding can merge neighbours when the intensity is huge.
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
        }
    }
    ArrivalPath { times }
}

pub fn sample_arrival_path(params: &PowerLawParams, interval: &TimeInterval, seed: u64) -> ArrivalPath {
    sample_arrivals(params, interval, &mut rng::stream(seed, 0, 0, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    /// Distance from `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == value { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - value) / self.std_error
        }
    }
}

/// Mean and standard error of `f(i)` over `i < n`, evaluated in parallel and
/// reduced in a fixed order.
fn mc_mean<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> McEstimate {
    let blocks: Vec<(f64, f64)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let v = f(i);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = blocks.iter().fold((0.0, 0.0), |acc, b| (acc.0 + b.0, acc.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 { ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    McEstimate { mean, std_error: (var / nf).sqrt(), paths: n }
}

/// Average of `(t2 − T_k)·1[T_k ≤ t2]` over simulated paths.
pub fn estimate_expected_age_mc(
    params: &PowerLawParams,
    interval: &TimeInterval,
    k: u32,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate, PlanError> {
    if n_paths < 1000 {
        return Err(PlanError::Config(format!("at least 1000 paths required, got {n_paths}")));
    }
    if k == 0 {
        return Err(PlanError::Config("arrival index starts at 1".into()));
    }
    let base = params.cumulative_from_launch(interval.start());
    let total = params.lambda_between(interval.start(), interval.end());
    Ok(mc_mean(n_paths, |i| {
        let mut r = rng::stream(seed, 0, i as u64, 0);
        let mut u = 0.0;
        for _ in 0..k {
            let gap: f64 = Exp1.sample(&mut r);
            u += gap;
            if u > total {
                return 0.0;
            }
        }
        let t = params.time_at_cumulative(base + u).clamp(interval.start(), interval.end());
        interval.end() - t
    }))
}

/// How a simulated inspection prices the defects it finds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgeAccounting {
    /// `α·A^β` of each defect's realised age.
    #[default]
    Realized,
    /// `α·Ā_ℓ^β` of the mean, over paths, of the ℓ-th defect's age (zero
    /// when a path has fewer than ℓ defects); the sampling error comes from
    /// the delta method.
    ExpectedAge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub accounting: AgeAccounting,
    pub cost: McEstimate,
    pub setup: f64,
    pub inspection: f64,
    pub repair: McEstimate,
    pub defects: McEstimate,
}

// Per compartment, the ages of defects found at each of its inspections.
fn path_ages(
    plan: &SchedulePlan,
    fleet: &FleetModel,
    horizon: &PlanningHorizon,
    seed: u64,
    i: usize,
) -> Vec<Vec<Vec<f64>>> {
    let window = TimeInterval::new(horizon.t_now(), horizon.t_end()).expect("horizon is a valid interval");
    fleet
        .compartments
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let params = &c.params[i % c.params.len()];
            let path = sample_arrivals(params, &window, &mut rng::stream(seed, m as u64, i as u64, 0));
            let mut found = Vec::new();
            let mut next = 0;
            for k in plan.inspection_indices(m) {
                let t = horizon.time(k);
                let start = next;
                while next < path.times.len() && path.times[next] <= t {
                    next += 1;
                }
                found.push(path.times[start..next].iter().map(|&s| t - s).collect());
            }
            found
        })
        .collect()
}

/// Executes `plan` on `n_paths` simulated fleets with minimal repair.
pub fn simulate_plan(
    plan: &SchedulePlan,
    fleet: &FleetModel,
    cfg: &CostConfig,
    horizon: &PlanningHorizon,
    n_paths: usize,
    seed: u64,
    accounting: AgeAccounting,
) -> Result<SimulationResult, PlanError> {
    cfg.validate()?;
    if n_paths < 2 {
        return Err(PlanError::Config(format!("at least 2 paths required, got {n_paths}")));
    }
    if plan.steps() != horizon.steps() || plan.units().len() != fleet.len() {
        return Err(PlanError::Constraint("plan does not match the fleet and horizon".into()));
    }
    let setup = cfg.ship_setup_cost * plan.events().len() as f64;
    let inspection = cfg.compartment_inspection_cost * plan.inspection_count() as f64;
    let defects = mc_mean(n_paths, |i| {
        path_ages(plan, fleet, horizon, seed, i).iter().flatten().map(|v| v.len() as f64).sum()
    });

    let repair = match accounting {
        AgeAccounting::Realized => mc_mean(n_paths, |i| {
            let ages = path_ages(plan, fleet, horizon, seed, i);
            ages.iter().flatten().flatten().map(|&a| repair_cost(a, cfg)).sum()
        }),
        AgeAccounting::ExpectedAge => {
            // Slot (m, j, ℓ): the ℓ-th defect found at m's j-th inspection,
            // taken in order of arrival.
            let sums = slot_sums(plan, fleet, horizon, seed, n_paths);
            let n = n_paths as f64;
            let value: f64 = sums.iter().flatten().flatten().map(|&s| repair_cost(s / n, cfg)).sum();
            let grad: Vec<Vec<Vec<f64>>> = sums
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|j| {
                            j.iter()
                                .map(|&s| {
                                    let mean = s / n;
                                    if mean > 0.0 {
                                        cfg.repair_alpha * cfg.repair_beta * mean.powf(cfg.repair_beta - 1.0)
                                    } else {
                                        0.0
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let linear = mc_mean(n_paths, |i| {
                let ages = path_ages(plan, fleet, horizon, seed, i);
                let mut v = 0.0;
                for (m, per) in ages.iter().enumerate() {
                    for (j, found) in per.iter().enumerate() {
                        // Oldest first is arrival order.
                        for (l, &a) in found.iter().enumerate() {
                            v += grad[m][j][l] * a;
                        }
                    }
                }
                v
            });
            McEstimate { mean: value, std_error: linear.std_error, paths: n_paths }
        }
    };
    let cost = McEstimate {
        mean: setup + inspection + repair.mean,
        std_error: repair.std_error,
        paths: n_paths,
    };
    Ok(SimulationResult { accounting, cost, setup, inspection, repair, defects })
}

fn slot_sums(
    plan: &SchedulePlan,
    fleet: &FleetModel,
    horizon: &PlanningHorizon,
    seed: u64,
    n_paths: usize,
) -> Vec<Vec<Vec<f64>>> {
    let empty: Vec<Vec<Vec<f64>>> =
        (0..fleet.len()).map(|m| vec![Vec::new(); plan.inspection_indices(m).len()]).collect();
    let add = |acc: &mut Vec<Vec<Vec<f64>>>, other: &[Vec<Vec<f64>>]| {
        for (am, om) in acc.iter_mut().zip(other) {
            for (aj, oj) in am.iter_mut().zip(om) {
                if aj.len() < oj.len() {
                    aj.resize(oj.len(), 0.0);
                }
                for (a, o) in aj.iter_mut().zip(oj) {
                    *a += o;
                }
            }
        }
    };
    let blocks: Vec<Vec<Vec<Vec<f64>>>> = (0..n_paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = empty.clone();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                add(&mut acc, &path_ages(plan, fleet, horizon, seed, i));
            }
            acc
        })
        .collect();
    let mut total = empty;
    for b in &blocks {
        add(&mut total, b);
    }
    total
}

/// Normal population of per-compartment `(ln a, ln b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamPopulation {
    pub mean_ln_a: f64,
    pub sd_ln_a: f64,
    pub mean_ln_b: f64,
    pub sd_ln_b: f64,
}

impl Default for ParamPopulation {
    fn default() -> Self {
        Self { mean_ln_a: (0.002f64).ln(), sd_ln_a: 0.5, mean_ln_b: 1.5f64.ln(), sd_ln_b: 0.1 }
    }
}

/// When synthetic compartments get inspected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectionRegime {
    /// Every compartment every so many months.
    Every(f64),
    /// Intervals in months handed out to compartments in turn.
    Cycle(Vec<f64>),
    /// Explicit inspection times shared by all compartments.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub ships: usize,
    pub compartments_per_ship: usize,
    pub population: ParamPopulation,
    pub regime: InspectionRegime,
    /// Last month of the observation record.
    pub observed_until: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            ships: 3,
            compartments_per_ship: 10,
            population: ParamPopulation::default(),
            regime: InspectionRegime::Cycle(vec![12.0, 24.0, 30.0, 60.0]),
            observed_until: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFleet {
    pub dataset: FleetDataset,
    /// True parameters, in dataset order.
    pub truth: Vec<(Unit, PowerLawParams)>,
}

/// Draws compartment parameters, simulates their defect arrivals and bins
/// them at the regime's inspection times.
pub fn synthesize_fleet(cfg: &SynthConfig, seed: u64) -> Result<SyntheticFleet, FleetDataError> {
    let bad = |message: String| FleetDataError::Validation { key: "synthetic fleet".into(), message };
    if cfg.ships == 0 || cfg.compartments_per_ship == 0 {
        return Err(bad("needs at least one ship and one compartment".into()));
    }
    if !(cfg.observed_until > 0.0) {
        return Err(bad(format!("observation end {} must be positive", cfg.observed_until)));
    }
    let p = &cfg.population;
    if !(p.sd_ln_a >= 0.0 && p.sd_ln_b >= 0.0) {
        return Err(bad("population standard deviations must be nonnegative".into()));
    }
    let width = (cfg.ships * cfg.compartments_per_ship).to_string().len();
    let ship_width = cfg.ships.to_string().len();
    let mut histories = Vec::new();
    let mut truth = Vec::new();
    for s in 0..cfg.ships {
        for c in 0..cfg.compartments_per_ship {
            let idx = s * cfg.compartments_per_ship + c;
            let unit = Unit::new(format!("S{:0ship_width$}", s + 1), format!("C{:0width$}", c + 1));
            let mut r = rng::stream(seed, 0, idx as u64, 0);
            let z_a: f64 = StandardNormal.sample(&mut r);
            let z_b: f64 = StandardNormal.sample(&mut r);
            let params = PowerLawParams::from_log(p.mean_ln_a + p.sd_ln_a * z_a, p.mean_ln_b + p.sd_ln_b * z_b)
                .map_err(|e| bad(e.to_string()))?;
            let times = regime_times(&cfg.regime, idx, cfg.observed_until).map_err(bad)?;
            let window = TimeInterval::new(0.0, cfg.observed_until).map_err(|e| bad(e.to_string()))?;
            let path = sample_arrivals(&params, &window, &mut rng::stream(seed, 1, idx as u64, 0));
            let mut inspections = Vec::with_capacity(times.len());
            let mut next = 0;
            for t in times {
                let start = next;
                while next < path.times.len() && path.times[next] <= t {
                    next += 1;
                }
                inspections.push((t, (next - start) as u64));
            }
            histories.push(CompartmentHistory::new(unit.ship_id.clone(), unit.compartment_id.clone(), inspections)?);
            truth.push((unit, params));
        }
    }
    Ok(SyntheticFleet { dataset: FleetDataset::new(histories)?, truth })
}

fn regime_times(regime: &InspectionRegime, idx: usize, until: f64) -> Result<Vec<f64>, String> {
    let every = |step: f64| -> Result<Vec<f64>, String> {
        if !(step > 0.0) {
            return Err(format!("inspection interval {step} must be positive"));
        }
        let n = (until / step + 1e-9).floor() as usize;
        if n == 0 {
            return Err(format!("no inspection of a {step}-month regime fits before month {until}"));
        }
        Ok((1..=n).map(|j| j as f64 * step).collect())
    };
    match regime {
        InspectionRegime::Every(step) => every(*step),
        InspectionRegime::Cycle(steps) if steps.is_empty() => Err("empty interval cycle".into()),
        InspectionRegime::Cycle(steps) => every(steps[idx % steps.len()]),
        InspectionRegime::Times(times) => {
            if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= until)) {
                return Err(format!("inspection times must lie in (0, {until}]"));
            }
            Ok(times.clone())
        }
    }
}
