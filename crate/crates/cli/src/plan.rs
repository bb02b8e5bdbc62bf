use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use coatplan::economics::{plan_total_cost, CompartmentModel, CostModel, FleetModel, PlanCost};
use coatplan::fleet::write_inspection_csv;
use coatplan::inference::FitMode;
use coatplan::nhpp::PowerLawParams;
use coatplan::plan::{PlanError, PlanningHorizon, SchedulePlan, Unit};
use coatplan::planner::*;
use coatplan::simulator::{simulate_plan, synthesize_fleet, SimulationResult};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Failure, ResultExt};
use crate::fit::{load_dataset, load_samples};
use crate::output::{num, Outputs};

fn plan_failure(e: PlanError) -> Failure {
    Failure::config(e)
}

#[derive(Deserialize)]
struct ParamRow {
    ship_id: String,
    compartment_id: String,
    a: f64,
    b: f64,
    #[serde(default)]
    group: Option<String>,
}

fn read_params(path: &Path) -> Result<FleetModel, Failure> {
    let file = File::open(path).data_err(|| format!("opening {}", path.display()))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let mut comps = Vec::new();
    for (i, row) in r.deserialize::<ParamRow>().enumerate() {
        let row = row.data_err(|| format!("{} row {}", path.display(), i + 1))?;
        let params = PowerLawParams::new(row.a, row.b).data_err(|| format!("{} row {}", path.display(), i + 1))?;
        comps.push(CompartmentModel {
            unit: Unit::new(row.ship_id, row.compartment_id),
            params: vec![params],
            group: row.group.filter(|g| !g.is_empty()),
        });
    }
    FleetModel::new(comps).data_err(|| format!("parameters in {}", path.display()))
}

/// The costing model: explicit parameters, or posterior draws from `fit`.
pub fn load_fleet(cfg: &RunConfig) -> Result<FleetModel, Failure> {
    if let Some(p) = &cfg.data.params {
        return read_params(p);
    }
    if cfg.data.samples.is_none() {
        return Err(Failure::config("planning needs parameters (--params) or posterior samples (--samples)"));
    }
    let samples = load_samples(cfg)?;
    let data = match &cfg.data.path {
        Some(_) => Some(load_dataset(cfg)?),
        None => None,
    };
    let units: Vec<Unit> = match (&samples.mode, &data) {
        (_, Some(d)) => d.compartments().iter().map(|h| Unit::new(h.ship_id(), h.compartment_id())).collect(),
        (FitMode::Pooled, None) => return Err(Failure::config("pooled samples need --data to list the compartments")),
        _ => samples
            .compartments
            .iter()
            .map(|c| {
                let (s, id) = c.key.split_once('/').unwrap_or(("", &c.key));
                Unit::new(s, id)
            })
            .collect(),
    };
    let mut fleet = FleetModel::from_samples(&samples, &units, cfg.model.parameter_usage).map_err(plan_failure)?;
    if let Some(d) = &data {
        for c in &mut fleet.compartments {
            c.group = d.group_of(&c.unit.key()).map(str::to_string);
        }
    }
    Ok(fleet)
}

pub fn cost_model(cfg: &RunConfig) -> Result<CostModel, Failure> {
    let fleet = load_fleet(cfg)?;
    let h = &cfg.horizon;
    let horizon = PlanningHorizon::from_span(h.t_now, h.t_end, h.delta_t).map_err(plan_failure)?;
    CostModel::new(fleet, cfg.cost, horizon).map_err(plan_failure)
}

fn groups(cfg: &RunConfig, model: &CostModel) -> Result<CompartmentGroups, Failure> {
    match CompartmentGroups::from_labels(model) {
        Some(g) => Ok(g),
        None => group_compartments(model, cfg.planner.n_groups.clamp(1, model.fleet().len())).map_err(plan_failure),
    }
}

fn solve(cfg: &RunConfig, model: &CostModel, groups: &CompartmentGroups) -> Result<PlanSolution, Failure> {
    let p = &cfg.planner;
    match p.kind {
        PlannerKind::Practice => {
            let months = practice_assignment(model, &p.practice_intervals).map_err(plan_failure)?;
            practice_solution(model, &months).map_err(plan_failure)
        }
        PlannerKind::Interval => {
            cfg.require_seed("the interval planner")?;
            optimize_intervals(model, p.interval_by_group.then_some(groups), &p.ga).map_err(plan_failure)
        }
        PlannerKind::Schedule => {
            cfg.require_seed("the schedule planner")?;
            optimize_schedule(model, groups, &p.ga).map_err(plan_failure)
        }
    }
}

#[derive(Serialize)]
struct CostTotals {
    total: f64,
    setup: f64,
    inspection: f64,
    repair: f64,
}

impl From<&PlanCost> for CostTotals {
    fn from(c: &PlanCost) -> Self {
        Self { total: c.total, setup: c.setup, inspection: c.inspection, repair: c.repair }
    }
}

#[derive(Serialize)]
struct IntervalRow {
    ship_id: String,
    compartment_id: String,
    steps: usize,
    months: f64,
}

#[derive(Serialize)]
struct Oracle {
    cost: f64,
    relative_gap: f64,
}

#[derive(Serialize)]
struct GaSummary {
    generations: usize,
    evaluations: usize,
    stop: StopReason,
}

#[derive(Serialize)]
struct OptimizeReport {
    planner: PlannerKind,
    compartments: usize,
    steps: usize,
    cost: CostTotals,
    events: usize,
    inspections: usize,
    groups: Vec<Vec<String>>,
    intervals: Option<Vec<IntervalRow>>,
    ga: Option<GaSummary>,
    oracle: Option<Oracle>,
}

fn write_plan(out: &mut Outputs, name: &str, plan: &SchedulePlan, horizon: &PlanningHorizon) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for (m, u) in plan.units().iter().enumerate() {
        for k in plan.inspection_indices(m) {
            rows.push(vec![u.ship_id.clone(), u.compartment_id.clone(), k.to_string(), num(horizon.time(k))]);
        }
    }
    out.table(name, &["ship_id", "compartment_id", "grid_index", "time_months"], rows)
}

pub fn optimize(cfg: &RunConfig, out: &mut Outputs, oracle: bool) -> Result<(), Failure> {
    let model = cost_model(cfg)?;
    let groups = groups(cfg, &model)?;
    let sol = solve(cfg, &model, &groups)?;
    let horizon = *model.horizon();

    let oracle = if oracle {
        let exact = match sol.planner {
            PlannerKind::Practice => plan_total_cost(&sol.plan, model.fleet(), model.config(), &horizon).map_err(plan_failure)?,
            PlannerKind::Interval => {
                brute_force_intervals(&model, cfg.planner.interval_by_group.then_some(&groups)).map_err(plan_failure)?.cost
            }
            PlannerKind::Schedule => brute_force_plan(&model, &groups).map_err(plan_failure)?.cost,
        };
        Some(Oracle { cost: exact.total, relative_gap: sol.cost.total / exact.total - 1.0 })
    } else {
        None
    };

    write_plan(out, "plan.csv", &sol.plan, &horizon)?;
    out.table(
        "events.csv",
        &["grid_index", "time_months", "ship_id", "compartments", "cost"],
        sol.cost.events.iter().map(|e| {
            vec![e.grid_index.to_string(), num(e.time), e.ship_id.clone(), e.compartments.to_string(), num(e.cost)]
        }),
    )?;
    let mut cumulative = 0;
    let mut by_time = Vec::new();
    for k in 1..=horizon.steps() {
        let inspected = (0..sol.plan.units().len()).filter(|&m| sol.plan.inspected(m, k)).count();
        let ships = sol.cost.events.iter().filter(|e| e.grid_index == k).count();
        cumulative += inspected;
        by_time.push(vec![k.to_string(), num(horizon.time(k)), inspected.to_string(), ships.to_string(), cumulative.to_string()]);
    }
    out.table(
        "inspections_by_time.csv",
        &["grid_index", "time_months", "compartments_inspected", "ships_out_of_service", "cumulative_inspections"],
        by_time,
    )?;

    let units = model.fleet().units();
    let report = OptimizeReport {
        planner: sol.planner,
        compartments: units.len(),
        steps: horizon.steps(),
        cost: (&sol.cost).into(),
        events: sol.event_count(),
        inspections: sol.plan.inspection_count(),
        groups: groups.members.iter().map(|g| g.iter().map(|&m| units[m].key()).collect()).collect(),
        intervals: sol.intervals.as_ref().map(|ys| {
            units
                .iter()
                .zip(ys)
                .map(|(u, &y)| IntervalRow {
                    ship_id: u.ship_id.clone(),
                    compartment_id: u.compartment_id.clone(),
                    steps: y,
                    months: y as f64 * horizon.delta_t(),
                })
                .collect()
        }),
        ga: sol.ga.as_ref().map(|g| GaSummary { generations: g.generations, evaluations: g.evaluations, stop: g.stop }),
        oracle,
    };
    out.json("summary.json", &report)
}

pub fn sensitivity(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    cfg.require_seed("sensitivity")?;
    let p = &cfg.planner;
    if p.sweep_values.is_empty() {
        return Err(Failure::config("no sweep values given"));
    }
    let model = cost_model(cfg)?;
    let settings = PlannerSettings {
        ga: p.ga,
        groups: groups(cfg, &model)?,
        interval_by_group: p.interval_by_group,
        practice_months: practice_assignment(&model, &p.practice_intervals).map_err(plan_failure)?,
    };
    let rows = sensitivity_sweep(&model, p.sweep_axis, &p.sweep_values, &settings).map_err(plan_failure)?;
    let axis = match p.sweep_axis {
        SweepAxis::Beta => "beta",
        SweepAxis::ShipSetup => "ship_setup_cost",
    };
    out.table(
        "sweep.csv",
        &["axis", "value", "planner", "total_cost", "events", "inspections", "event_sizes"],
        rows.iter().map(|r| {
            vec![
                axis.to_string(),
                num(r.value),
                r.planner.name().to_string(),
                num(r.cost),
                r.events.to_string(),
                r.inspections.to_string(),
                r.event_sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
            ]
        }),
    )
}

fn read_plan(path: &Path, units: &[Unit], horizon: &PlanningHorizon) -> Result<SchedulePlan, Failure> {
    #[derive(Deserialize)]
    struct Row {
        ship_id: String,
        compartment_id: String,
        grid_index: usize,
    }
    let file = File::open(path).data_err(|| format!("opening plan {}", path.display()))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let index: BTreeMap<String, usize> = units.iter().enumerate().map(|(m, u)| (u.key(), m)).collect();
    let k = horizon.steps();
    let mut rows = vec![vec![false; k]; units.len()];
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.data_err(|| format!("{} row {}", path.display(), i + 1))?;
        let key = Unit::new(row.ship_id, row.compartment_id).key();
        let m = *index.get(&key).ok_or_else(|| Failure::data(format!("plan names unknown compartment {key}")))?;
        if row.grid_index == 0 || row.grid_index > k {
            return Err(Failure::data(format!("plan grid index {} outside 1..={k}", row.grid_index)));
        }
        rows[m][row.grid_index - 1] = true;
    }
    SchedulePlan::new(k, units.to_vec(), rows).data_err(|| format!("plan {}", path.display()))
}

#[derive(Serialize)]
struct SimulationReport {
    plan: String,
    paths: usize,
    analytic: CostTotals,
    simulated: SimulationResult,
    gap: f64,
    gap_std_error: f64,
    gap_z: f64,
}

pub fn simulate(cfg: &RunConfig, out: &mut Outputs, plan_path: Option<&Path>) -> Result<(), Failure> {
    let seed = cfg.require_seed("simulate")?;
    let paths = cfg.planner.simulation_paths;
    if paths < 2 {
        return Err(Failure::config(format!("--paths must be at least 2, got {paths}")));
    }
    let model = cost_model(cfg)?;
    let horizon = *model.horizon();
    let (plan, source) = match plan_path {
        Some(p) => (read_plan(p, &model.fleet().units(), &horizon)?, p.display().to_string()),
        None => {
            let g = groups(cfg, &model)?;
            (solve(cfg, &model, &g)?.plan, format!("{} planner", cfg.planner.kind.name()))
        }
    };
    let analytic = plan_total_cost(&plan, model.fleet(), model.config(), &horizon).map_err(plan_failure)?;
    let sim = simulate_plan(&plan, model.fleet(), model.config(), &horizon, paths, seed, cfg.planner.accounting)
        .map_err(plan_failure)?;
    let gap = sim.cost.mean - analytic.total;
    let se = sim.cost.std_error;
    out.json(
        "simulation.json",
        &SimulationReport {
            plan: source,
            paths,
            analytic: (&analytic).into(),
            gap,
            gap_std_error: se,
            gap_z: if se > 0.0 { gap / se } else { 0.0 },
            simulated: sim,
        },
    )
}

pub fn synth(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let seed = cfg.require_seed("synth")?;
    let fleet = synthesize_fleet(&cfg.data.synth, seed).config_err(|| "synthetic fleet settings")?;
    let lines = out.audit.comment_lines();
    let mut w = out.create("fleet.csv")?;
    write_inspection_csv(&fleet.dataset, &mut w, &lines).config_err(|| "writing fleet.csv")?;
    drop(w);
    out.table(
        "truth.csv",
        &["ship_id", "compartment_id", "a", "b"],
        fleet.truth.iter().map(|(u, p)| vec![u.ship_id.clone(), u.compartment_id.clone(), num(p.a()), num(p.b())]),
    )
}
