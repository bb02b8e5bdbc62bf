//! Expected cost of inspection plans.
//!
//! Inspecting compartment `m` at `t_k` after its previous inspection at `t_ℓ`
//! costs `c_ins + Σ_j α·Ā_j^β`, where `Ā_j` is the expected age of the j-th
//! defect found. Every ship that inspects anything at `t_k` also pays the
//! setup cost `c_s` once.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::inference::{FitMode, PosteriorSamples};
use crate::nhpp::{cumulative_intensity, expected_total_age_cost, NhppError, PowerLawParams, TimeInterval};
use crate::plan::{IntervalPolicy, PlanError, PlanningHorizon, SchedulePlan, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub ship_setup_cost: f64,
    pub compartment_inspection_cost: f64,
    pub repair_alpha: f64,
    pub repair_beta: f64,
    pub age_sum_tolerance: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            ship_setup_cost: 500.0,
            compartment_inspection_cost: 10.0,
            repair_alpha: 1.0,
            repair_beta: 1.25,
            age_sum_tolerance: 1e-9,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = self.ship_setup_cost >= 0.0
            && self.compartment_inspection_cost >= 0.0
            && self.repair_alpha >= 0.0
            && self.repair_beta > 0.0
            && self.age_sum_tolerance > 0.0
            && [self.ship_setup_cost, self.compartment_inspection_cost, self.repair_alpha, self.repair_beta]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PlanError::Config(format!("invalid cost settings {self:?}")))
        }
    }
}

/// `α·age^β`.
pub fn repair_cost(age: f64, cfg: &CostConfig) -> f64 {
    cfg.repair_alpha * age.max(0.0).powf(cfg.repair_beta)
}

fn repair_sum(params: &PowerLawParams, t1: f64, t2: f64, cfg: &CostConfig) -> Result<f64, NhppError> {
    let interval = TimeInterval::new(t1, t2)?;
    if cfg.repair_alpha == 0.0 {
        return Ok(0.0);
    }
    let sum = expected_total_age_cost(params, &interval, |age| repair_cost(age, cfg), cfg.age_sum_tolerance)?;
    Ok(sum.value)
}

/// Cost of inspecting one compartment at `this` when it was last inspected
/// at `prev`.
pub fn expected_compartment_cost(
    params: &PowerLawParams,
    prev: f64,
    this: f64,
    cfg: &CostConfig,
) -> Result<f64, PlanError> {
    if !(prev < this) {
        return Err(PlanError::Constraint(format!("inspection at {this} does not follow {prev}")));
    }
    Ok(cfg.compartment_inspection_cost + repair_sum(params, prev, this, cfg)?)
}

/// Cost of one ship's inspection event at `t_k`; `selected` lists the
/// parameters and last inspection time of each compartment inspected.
pub fn expected_event_cost(selected: &[(PowerLawParams, f64)], t_k: f64, cfg: &CostConfig) -> Result<f64, PlanError> {
    if selected.is_empty() {
        return Ok(0.0);
    }
    let mut total = cfg.ship_setup_cost;
    for (params, last) in selected {
        total += expected_compartment_cost(params, *last, t_k, cfg)?;
    }
    Ok(total)
}

/// Time of the latest inspection of `m` strictly before grid point `k`,
/// falling back to `t_now`.
pub fn last_inspection_time(plan: &SchedulePlan, m: usize, k: usize, horizon: &PlanningHorizon) -> f64 {
    horizon.time(plan.last_inspection_index(m, k))
}

/// Expected number of defects found by inspections at `times`, counting from
/// `t_now`.
pub fn expected_horizon_defects(
    params: &PowerLawParams,
    times: &[f64],
    horizon: &PlanningHorizon,
) -> Result<f64, PlanError> {
    let mut prev = horizon.t_now();
    let mut total = 0.0;
    for &t in times {
        if !(t > prev) || t > horizon.t_end() + 1e-9 {
            return Err(PlanError::Constraint(format!("inspection time {t} out of order or beyond the horizon")));
        }
        total += cumulative_intensity(params, &TimeInterval::new(prev, t)?);
        prev = t;
    }
    Ok(total)
}

/// How posterior draws become costing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParameterUsage {
    /// `exp` of the posterior means of `ln a` and `ln b`.
    #[default]
    PointEstimate,
    /// Cost averaged over this many evenly spaced draws.
    Draws(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentModel {
    pub unit: Unit,
    /// Costs are averaged over these parameter sets.
    pub params: Vec<PowerLawParams>,
    pub group: Option<String>,
}

impl CompartmentModel {
    pub fn point(unit: Unit, params: PowerLawParams) -> Self {
        Self { unit, params: vec![params], group: None }
    }

    /// The parameter set used for ranking; the mean in log space for several.
    pub fn representative(&self) -> PowerLawParams {
        if self.params.len() == 1 {
            return self.params[0];
        }
        let n = self.params.len() as f64;
        let ln_a = self.params.iter().map(|p| p.a().ln()).sum::<f64>() / n;
        let ln_b = self.params.iter().map(|p| p.b().ln()).sum::<f64>() / n;
        PowerLawParams::from_log(ln_a, ln_b).unwrap_or(self.params[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FleetModel {
    pub compartments: Vec<CompartmentModel>,
}

impl FleetModel {
    pub fn new(compartments: Vec<CompartmentModel>) -> Result<Self, PlanError> {
        if compartments.is_empty() {
            return Err(PlanError::Config("fleet model has no compartments".into()));
        }
        if let Some(c) = compartments.iter().find(|c| c.params.is_empty()) {
            return Err(PlanError::Config(format!("{} has no parameters", c.unit.key())));
        }
        Ok(Self { compartments })
    }

    /// Costing parameters for `units` from a posterior. A pooled fit supplies
    /// the same parameters to every unit.
    pub fn from_samples(samples: &PosteriorSamples, units: &[Unit], usage: ParameterUsage) -> Result<Self, PlanError> {
        let mut out = Vec::with_capacity(units.len());
        for unit in units {
            let draws = match samples.mode {
                FitMode::Pooled => samples.compartments.first(),
                _ => samples.compartment(&unit.key()),
            }
            .ok_or_else(|| PlanError::Config(format!("no posterior draws for {}", unit.key())))?;
            if draws.is_empty() {
                return Err(PlanError::Config(format!("no posterior draws for {}", unit.key())));
            }
            let params = match usage {
                ParameterUsage::PointEstimate => {
                    let m = draws.mean();
                    vec![PowerLawParams::from_log(m.ln_a, m.ln_b)?]
                }
                ParameterUsage::Draws(n) => {
                    if n == 0 {
                        return Err(PlanError::Config("draw count for costing must be positive".into()));
                    }
                    let total = draws.len();
                    let n = n.min(total);
                    (0..n)
                        .map(|i| {
                            let j = i * total / n;
                            PowerLawParams::from_log(draws.ln_a[j], draws.ln_b[j])
                        })
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            out.push(CompartmentModel { unit: unit.clone(), params, group: None });
        }
        Self::new(out)
    }

    pub fn units(&self) -> Vec<Unit> {
        self.compartments.iter().map(|c| c.unit.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCost {
    pub grid_index: usize,
    pub time: f64,
    pub ship_id: String,
    pub compartments: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCost {
    pub total: f64,
    pub setup: f64,
    pub inspection: f64,
    pub repair: f64,
    pub events: Vec<EventCost>,
}

/// A fleet priced on one horizon, with every `(ℓ, k)` repair sum computed at
/// most once.
pub struct CostModel {
    cfg: CostConfig,
    horizon: PlanningHorizon,
    fleet: FleetModel,
    ship_of: Vec<usize>,
    ships: Vec<String>,
    // Per compartment, upper triangle of (ℓ, k) with 0 ≤ ℓ < k ≤ K.
    tables: Arc<Vec<Vec<OnceLock<Result<f64, NhppError>>>>>,
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostModel").field("cfg", &self.cfg).field("horizon", &self.horizon).finish_non_exhaustive()
    }
}

impl CostModel {
    pub fn new(fleet: FleetModel, cfg: CostConfig, horizon: PlanningHorizon) -> Result<Self, PlanError> {
        cfg.validate()?;
        if fleet.is_empty() {
            return Err(PlanError::Config("fleet model has no compartments".into()));
        }
        let mut ships: Vec<String> = Vec::new();
        let mut ship_of = Vec::with_capacity(fleet.len());
        for c in &fleet.compartments {
            let idx = match ships.iter().position(|s| *s == c.unit.ship_id) {
                Some(i) => i,
                None => {
                    ships.push(c.unit.ship_id.clone());
                    ships.len() - 1
                }
            };
            ship_of.push(idx);
        }
        let k = horizon.steps();
        let cells = k * (k + 1) / 2;
        let tables = Arc::new((0..fleet.len()).map(|_| (0..cells).map(|_| OnceLock::new()).collect()).collect());
        Ok(Self { cfg, horizon, fleet, ship_of, ships, tables })
    }

    /// The same fleet and horizon under other costs. Repair sums computed so
    /// far are kept when `α`, `β` and the tolerance are unchanged.
    pub fn with_config(&self, cfg: CostConfig) -> Result<Self, PlanError> {
        cfg.validate()?;
        let same_repair = cfg.repair_alpha == self.cfg.repair_alpha
            && cfg.repair_beta == self.cfg.repair_beta
            && cfg.age_sum_tolerance == self.cfg.age_sum_tolerance;
        if !same_repair {
            return Self::new(self.fleet.clone(), cfg, self.horizon);
        }
        Ok(Self {
            cfg,
            horizon: self.horizon,
            fleet: self.fleet.clone(),
            ship_of: self.ship_of.clone(),
            ships: self.ships.clone(),
            tables: Arc::clone(&self.tables),
        })
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> &PlanningHorizon {
        &self.horizon
    }

    pub fn fleet(&self) -> &FleetModel {
        &self.fleet
    }

    pub fn ships(&self) -> &[String] {
        &self.ships
    }

    /// Ship index of each compartment.
    pub fn ship_of(&self) -> &[usize] {
        &self.ship_of
    }

    fn cell(&self, l: usize, k: usize) -> usize {
        // Row k holds ℓ = 0..k−1 and starts after 0 + 1 + … + (k − 1) cells.
        (k - 1) * k / 2 + l
    }

    /// Expected repair cost of compartment `m` inspected at grid point `k`
    /// after grid point `l`, averaged over its parameter sets.
    pub fn repair(&self, m: usize, l: usize, k: usize) -> Result<f64, PlanError> {
        if !(l < k && k <= self.horizon.steps()) {
            return Err(PlanError::Constraint(format!("grid pair ({l}, {k}) is not an interval")));
        }
        let slot = &self.tables[m][self.cell(l, k)];
        slot.get_or_init(|| self.compute_repair(m, l, k)).clone().map_err(PlanError::from)
    }

    fn compute_repair(&self, m: usize, l: usize, k: usize) -> Result<f64, NhppError> {
        let (t1, t2) = (self.horizon.time(l), self.horizon.time(k));
        let params = &self.fleet.compartments[m].params;
        let mut sum = 0.0;
        for p in params {
            sum += repair_sum(p, t1, t2, &self.cfg)?;
        }
        Ok(sum / params.len() as f64)
    }

    /// Inspection plus repair cost of compartment `m` following `row`
    /// (entries for `k = 1..=K`).
    pub fn row_cost(&self, m: usize, row: &[bool]) -> Result<f64, PlanError> {
        let mut last = 0;
        let mut total = 0.0;
        for (i, &x) in row.iter().enumerate() {
            if x {
                let k = i + 1;
                total += self.cfg.compartment_inspection_cost + self.repair(m, last, k)?;
                last = k;
            }
        }
        Ok(total)
    }

    /// Sum of event costs over the horizon, walked grid point by grid point.
    pub fn plan_cost(&self, plan: &SchedulePlan) -> Result<PlanCost, PlanError> {
        if plan.steps() != self.horizon.steps() || plan.units().len() != self.fleet.len() {
            return Err(PlanError::Constraint("plan does not match the fleet and horizon".into()));
        }
        for (m, u) in plan.units().iter().enumerate() {
            if *u != self.fleet.compartments[m].unit {
                return Err(PlanError::Constraint(format!("plan row {m} is {} but the fleet has {}", u.key(), self.fleet.compartments[m].unit.key())));
            }
        }
        let n = self.fleet.len();
        let mut last = vec![0usize; n];
        let mut out = PlanCost { total: 0.0, setup: 0.0, inspection: 0.0, repair: 0.0, events: Vec::new() };
        for k in 1..=self.horizon.steps() {
            for (s, ship) in self.ships.iter().enumerate() {
                let mut cost = 0.0;
                let mut count = 0;
                for m in (0..n).filter(|&m| self.ship_of[m] == s && plan.inspected(m, k)) {
                    let r = self.repair(m, last[m], k)?;
                    cost += self.cfg.compartment_inspection_cost + r;
                    out.inspection += self.cfg.compartment_inspection_cost;
                    out.repair += r;
                    last[m] = k;
                    count += 1;
                }
                if count > 0 {
                    cost += self.cfg.ship_setup_cost;
                    out.setup += self.cfg.ship_setup_cost;
                    out.total += cost;
                    out.events.push(EventCost {
                        grid_index: k,
                        time: self.horizon.time(k),
                        ship_id: ship.clone(),
                        compartments: count,
                        cost,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Cost of an interval policy computed straight from its inspection times,
    /// bypassing both plan expansion and the cached tables.
    pub fn interval_policy_cost(&self, policy: &IntervalPolicy) -> Result<f64, PlanError> {
        let k_max = self.horizon.steps();
        policy.validate(k_max)?;
        if policy.intervals.len() != self.fleet.len() {
            return Err(PlanError::Constraint("one interval per compartment required".into()));
        }
        let mut events: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.ships.len()];
        let mut inspections = 0usize;
        let mut repair = 0.0;
        for (m, &y) in policy.intervals.iter().enumerate() {
            let mut times: Vec<usize> = (1..=k_max / y).map(|j| j * y).collect();
            if times.last() != Some(&k_max) {
                times.push(k_max);
            }
            let mut prev = self.horizon.t_now();
            for &k in &times {
                let t = self.horizon.t_now() + k as f64 * self.horizon.delta_t();
                repair += self.compute_repair_between(m, prev, t)?;
                prev = t;
            }
            inspections += times.len();
            events[self.ship_of[m]].extend(times);
        }
        let n_events: usize = events.iter().map(BTreeSet::len).sum();
        Ok(self.cfg.ship_setup_cost * n_events as f64
            + self.cfg.compartment_inspection_cost * inspections as f64
            + repair)
    }

    fn compute_repair_between(&self, m: usize, t1: f64, t2: f64) -> Result<f64, PlanError> {
        let params = &self.fleet.compartments[m].params;
        let mut sum = 0.0;
        for p in params {
            sum += repair_sum(p, t1, t2, &self.cfg)?;
        }
        Ok(sum / params.len() as f64)
    }
}

/// Total expected cost of `plan`.
pub fn plan_total_cost(
    plan: &SchedulePlan,
    fleet: &FleetModel,
    cfg: &CostConfig,
    horizon: &PlanningHorizon,
) -> Result<PlanCost, PlanError> {
    CostModel::new(fleet.clone(), *cfg, *horizon)?.plan_cost(plan)
}
