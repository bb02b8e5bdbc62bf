//! Searching for cheap inspection plans.
//!
//! Two plan families are optimized by a genetic algorithm: fixed intervals
//! (one interval per compartment or per group) and free schedules (one
//! inspection row per group of compartments with similar defect rates).
//! Exhaustive search solves tiny instances exactly and serves as a check.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{CostConfig, CostModel, PlanCost};
use crate::nhpp::{cumulative_intensity, TimeInterval};
use crate::plan::{expansion_row, IntervalPolicy, PlanError, SchedulePlan};
use crate::rng;

pub use crate::plan::{expand_interval_policy, practice_plan};

const GA_LANE: u64 = 0x6761;
const EXHAUSTIVE_BITS: usize = 24;
const STAGNATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GAConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Generations without an improvement of at least 1e-9 before stopping.
    pub stagnation_limit: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means one over the genome length.
    pub mutation_rate: Option<f64>,
    pub elitism_count: usize,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 3000,
            max_generations: 50_000,
            stagnation_limit: 10_000,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism_count: 2,
            tournament_size: 3,
            seed: 0,
        }
    }
}

impl GAConfig {
    pub fn fast(seed: u64) -> Self {
        Self { population_size: 200, stagnation_limit: 500, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.population_size < 2 {
            return Err(PlanError::Config("population needs at least two individuals".into()));
        }
        if !rate_ok(self.crossover_rate) || !self.mutation_rate.is_none_or(rate_ok) {
            return Err(PlanError::Config("crossover and mutation rates must lie in [0, 1]".into()));
        }
        if self.elitism_count >= self.population_size {
            return Err(PlanError::Config("elitism must leave room for offspring".into()));
        }
        if self.tournament_size == 0 || self.max_generations == 0 || self.stagnation_limit == 0 {
            return Err(PlanError::Config("tournament size, generation cap and stagnation limit must be positive".into()));
        }
        Ok(())
    }
}

/// Partition of compartment indices; members of a group share one schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompartmentGroups {
    pub members: Vec<Vec<usize>>,
}

impl CompartmentGroups {
    pub fn singletons(n: usize) -> Self {
        Self { members: (0..n).map(|m| vec![m]).collect() }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<(), PlanError> {
        let mut seen = vec![false; n];
        for g in &self.members {
            if g.is_empty() {
                return Err(PlanError::Config("empty compartment group".into()));
            }
            for &m in g {
                if m >= n || std::mem::replace(&mut seen[m], true) {
                    return Err(PlanError::Config(format!("compartment {m} is missing or grouped twice")));
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(PlanError::Config("every compartment must belong to a group".into()));
        }
        Ok(())
    }

    /// Groups named by the fleet model's labels, in order of first use.
    pub fn from_labels(model: &CostModel) -> Option<Self> {
        let mut names: Vec<&str> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (m, c) in model.fleet().compartments.iter().enumerate() {
            let label = c.group.as_deref()?;
            match names.iter().position(|n| *n == label) {
                Some(i) => members[i].push(m),
                None => {
                    names.push(label);
                    members.push(vec![m]);
                }
            }
        }
        Some(Self { members })
    }
}

/// Expected defects over the horizon for each compartment.
pub fn horizon_rates(model: &CostModel) -> Vec<f64> {
    let h = model.horizon();
    let window = TimeInterval::new(h.t_now(), h.t_end()).expect("horizon is a valid interval");
    model.fleet().compartments.iter().map(|c| cumulative_intensity(&c.representative(), &window)).collect()
}

// Indices sorted by `key` ascending (ties by index), cut into `n` contiguous bands.
fn bands(key: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&i, &j| key[i].total_cmp(&key[j]).then(i.cmp(&j)));
    let n = n.min(key.len()).max(1);
    (0..n).map(|g| order[g * key.len() / n..(g + 1) * key.len() / n].to_vec()).collect()
}

/// Rate bands: compartments ranked by expected horizon defects and split into
/// `n_groups` equal-size bands, lowest rates first.
pub fn group_compartments(model: &CostModel, n_groups: usize) -> Result<CompartmentGroups, PlanError> {
    if n_groups == 0 {
        return Err(PlanError::Config("at least one group required".into()));
    }
    Ok(CompartmentGroups { members: bands(&horizon_rates(model), n_groups) })
}

/// Practice intervals by rate band: the busiest compartments get the
/// shortest interval in `choices`, the quietest the longest.
pub fn practice_assignment(model: &CostModel, choices: &[f64]) -> Result<Vec<f64>, PlanError> {
    if choices.is_empty() {
        return Err(PlanError::Config("no practice intervals given".into()));
    }
    let mut sorted = choices.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rates: Vec<f64> = horizon_rates(model).iter().map(|r| -r).collect();
    let mut out = vec![0.0; rates.len()];
    for (b, members) in bands(&rates, sorted.len()).iter().enumerate() {
        for &m in members {
            out[m] = sorted[b];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stagnation,
    GenerationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaStats {
    pub generations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Best cost after each generation, starting with the initial population.
    pub best_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Practice,
    Interval,
    Schedule,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Practice => "practice",
            Self::Interval => "interval",
            Self::Schedule => "schedule",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub planner: PlannerKind,
    pub plan: SchedulePlan,
    pub cost: PlanCost,
    /// Grid-step intervals per compartment, for interval plans.
    pub intervals: Option<Vec<usize>>,
    pub ga: Option<GaStats>,
}

impl PlanSolution {
    fn priced(model: &CostModel, planner: PlannerKind, plan: SchedulePlan, intervals: Option<Vec<usize>>, ga: Option<GaStats>) -> Result<Self, PlanError> {
        let cost = model.plan_cost(&plan)?;
        Ok(Self { planner, plan, cost, intervals, ga })
    }

    pub fn event_count(&self) -> usize {
        self.cost.events.len()
    }
}

/// Fixed bitset over grid points `1..=K`.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn zeros(k: usize) -> Self {
        Bits(vec![0; k.div_ceil(64)])
    }

    fn from_row(row: &[bool]) -> Self {
        let mut b = Self::zeros(row.len());
        for (i, &x) in row.iter().enumerate() {
            if x {
                b.0[i / 64] |= 1 << (i % 64);
            }
        }
        b
    }

    fn or(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Costs of group-level decisions, shared by every planner.
struct GroupCosts<'a> {
    model: &'a CostModel,
    groups: &'a CompartmentGroups,
    // Ships touched by each group.
    ships_of_group: Vec<Vec<usize>>,
    // Per group, repair sums over members for each grid pair, filled lazily.
    pair: Vec<Vec<OnceLock<Result<f64, PlanError>>>>,
}

impl<'a> GroupCosts<'a> {
    fn new(model: &'a CostModel, groups: &'a CompartmentGroups) -> Result<Self, PlanError> {
        groups.validate(model.fleet().len())?;
        let k = model.horizon().steps();
        let ships_of_group = groups
            .members
            .iter()
            .map(|g| {
                let mut s: Vec<usize> = g.iter().map(|&m| model.ship_of()[m]).collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let pair = groups.members.iter().map(|_| (0..k * (k + 1) / 2).map(|_| OnceLock::new()).collect()).collect();
        Ok(Self { model, groups, ships_of_group, pair })
    }

    fn steps(&self) -> usize {
        self.model.horizon().steps()
    }

    fn repair(&self, g: usize, l: usize, k: usize) -> Result<f64, PlanError> {
        let cell = (k - 1) * k / 2 + l;
        self.pair[g][cell]
            .get_or_init(|| {
                let mut s = 0.0;
                for &m in &self.groups.members[g] {
                    s += self.model.repair(m, l, k)?;
                }
                Ok(s)
            })
            .as_ref()
            .map(|&v| v)
            .map_err(|e| PlanError::Config(e.to_string()))
    }

    fn row_cost(&self, g: usize, row: &[bool]) -> Result<f64, PlanError> {
        let c_ins = self.model.config().compartment_inspection_cost * self.groups.members[g].len() as f64;
        let mut last = 0;
        let mut total = 0.0;
        for (i, &x) in row.iter().enumerate() {
            if x {
                total += c_ins + self.repair(g, last, i + 1)?;
                last = i + 1;
            }
        }
        Ok(total)
    }

    fn setup_cost(&self, rows: &[Bits]) -> f64 {
        let n_ships = self.model.ships().len();
        let mut per_ship: Vec<Bits> = vec![Bits::zeros(self.steps()); n_ships];
        for (g, row) in rows.iter().enumerate() {
            for &s in &self.ships_of_group[g] {
                per_ship[s].or(row);
            }
        }
        let events: usize = per_ship.iter().map(Bits::count).sum();
        self.model.config().ship_setup_cost * events as f64
    }

    fn plan(&self, rows: &[Vec<bool>]) -> Result<SchedulePlan, PlanError> {
        let n = self.model.fleet().len();
        let mut out = vec![Vec::new(); n];
        for (g, members) in self.groups.members.iter().enumerate() {
            for &m in members {
                out[m] = rows[g].clone();
            }
        }
        SchedulePlan::repaired(self.steps(), self.model.fleet().units(), out)
    }
}

/// What the GA needs to know about a genome family.
trait Genome: Sync {
    type Gene: Copy + PartialEq + Send + Sync;
    fn len(&self) -> usize;
    fn random_gene<R: Rng>(&self, pos: usize, rng: &mut R) -> Self::Gene;
    fn mutate<R: Rng>(&self, pos: usize, gene: Self::Gene, rng: &mut R) -> Self::Gene;
    fn repair(&self, genome: &mut [Self::Gene]);
    fn cost(&self, genome: &[Self::Gene]) -> Result<f64, PlanError>;
}

struct IntervalGenome<'a> {
    costs: &'a GroupCosts<'a>,
    // Per group, cost of members for each interval y = 1..=K.
    by_interval: Vec<Vec<f64>>,
    masks: Vec<Bits>,
}

impl<'a> IntervalGenome<'a> {
    fn new(costs: &'a GroupCosts<'a>) -> Result<Self, PlanError> {
        let k = costs.steps();
        let rows: Vec<Vec<bool>> = (1..=k).map(|y| expansion_row(y, k)).collect();
        let cells: Vec<(usize, usize)> = (0..costs.groups.len()).flat_map(|g| (0..k).map(move |y| (g, y))).collect();
        let flat: Vec<f64> =
            cells.par_iter().map(|&(g, y)| costs.row_cost(g, &rows[y])).collect::<Result<Vec<_>, _>>()?;
        let by_interval = flat.chunks(k).map(<[f64]>::to_vec).collect();
        let masks = rows.iter().map(|r| Bits::from_row(r)).collect();
        Ok(Self { costs, by_interval, masks })
    }
}

impl Genome for IntervalGenome<'_> {
    type Gene = u16;

    fn len(&self) -> usize {
        self.by_interval.len()
    }

    fn random_gene<R: Rng>(&self, _pos: usize, rng: &mut R) -> u16 {
        rng.random_range(1..=self.costs.steps() as u16)
    }

    fn mutate<R: Rng>(&self, pos: usize, gene: u16, rng: &mut R) -> u16 {
        let k = self.costs.steps() as u16;
        if rng.random_bool(0.5) {
            self.random_gene(pos, rng)
        } else if rng.random_bool(0.5) {
            if gene < k { gene + 1 } else { gene - 1 }.max(1)
        } else if gene > 1 {
            gene - 1
        } else {
            (gene + 1).min(k)
        }
    }

    fn repair(&self, _genome: &mut [u16]) {}

    fn cost(&self, genome: &[u16]) -> Result<f64, PlanError> {
        let rows: Vec<Bits> = genome.iter().map(|&y| self.masks[y as usize - 1].clone()).collect();
        let mut total = self.costs.setup_cost(&rows);
        for (g, &y) in genome.iter().enumerate() {
            total += self.by_interval[g][y as usize - 1];
        }
        Ok(total)
    }
}

struct ScheduleGenome<'a> {
    costs: &'a GroupCosts<'a>,
}

impl ScheduleGenome<'_> {
    fn rows(&self, genome: &[bool]) -> Vec<Vec<bool>> {
        genome.chunks(self.costs.steps()).map(<[bool]>::to_vec).collect()
    }
}

impl Genome for ScheduleGenome<'_> {
    type Gene = bool;

    fn len(&self) -> usize {
        self.costs.groups.len() * self.costs.steps()
    }

    fn random_gene<R: Rng>(&self, _pos: usize, rng: &mut R) -> bool {
        rng.random_bool(0.5)
    }

    fn mutate<R: Rng>(&self, _pos: usize, gene: bool, _rng: &mut R) -> bool {
        !gene
    }

    fn repair(&self, genome: &mut [bool]) {
        let k = self.costs.steps();
        for row in genome.chunks_mut(k) {
            row[k - 1] = true;
        }
    }

    fn cost(&self, genome: &[bool]) -> Result<f64, PlanError> {
        let k = self.costs.steps();
        let bits: Vec<Bits> = genome.chunks(k).map(Bits::from_row).collect();
        let mut total = self.costs.setup_cost(&bits);
        for (g, row) in genome.chunks(k).enumerate() {
            total += self.costs.row_cost(g, row)?;
        }
        Ok(total)
    }
}

// Lower cost wins, then lower index.
fn better(costs: &[f64], i: usize, j: usize) -> bool {
    costs[i] < costs[j] || (costs[i] == costs[j] && i < j)
}

fn run_ga<G: Genome>(problem: &G, cfg: &GAConfig, seeds: Vec<Vec<G::Gene>>) -> Result<(Vec<G::Gene>, f64, GaStats), PlanError> {
    cfg.validate()?;
    let len = problem.len();
    let pop_size = cfg.population_size;
    let mutation = cfg.mutation_rate.unwrap_or(1.0 / len as f64);

    let mut pop: Vec<Vec<G::Gene>> = (0..pop_size)
        .into_par_iter()
        .map(|i| {
            let mut genome = match seeds.get(i) {
                Some(s) if s.len() == len => s.clone(),
                _ => {
                    let mut r = rng::stream(cfg.seed, GA_LANE, 0, i as u64);
                    (0..len).map(|p| problem.random_gene(p, &mut r)).collect()
                }
            };
            problem.repair(&mut genome);
            genome
        })
        .collect();
    let mut costs: Vec<f64> = pop.par_iter().map(|g| problem.cost(g)).collect::<Result<_, _>>()?;
    let mut evaluations = pop_size;
    let best_of = |costs: &[f64]| (0..costs.len()).fold(0, |b, i| if better(costs, i, b) { i } else { b });
    let mut best = best_of(&costs);
    let mut best_cost = costs[best];
    let mut history = vec![best_cost];
    let mut stagnant = 0;
    let mut generation = 0;
    let stop = loop {
        if stagnant >= cfg.stagnation_limit {
            break StopReason::Stagnation;
        }
        if generation >= cfg.max_generations {
            break StopReason::GenerationLimit;
        }
        generation += 1;

        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]).then(i.cmp(&j)));
        let elites = &order[..cfg.elitism_count];
        let step = generation as u64;
        let offspring: Vec<Vec<G::Gene>> = (cfg.elitism_count..pop_size)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(cfg.seed, GA_LANE, step, i as u64);
                let pick = |r: &mut rand_chacha::ChaCha8Rng| {
                    let mut w = r.random_range(0..pop_size);
                    for _ in 1..cfg.tournament_size {
                        let c = r.random_range(0..pop_size);
                        if better(&costs, c, w) {
                            w = c;
                        }
                    }
                    w
                };
                let (p1, p2) = (pick(&mut r), pick(&mut r));
                let mut child = pop[p1].clone();
                if r.random_bool(cfg.crossover_rate) {
                    for (p, gene) in child.iter_mut().enumerate() {
                        if r.random_bool(0.5) {
                            *gene = pop[p2][p];
                        }
                    }
                }
                for p in 0..len {
                    if r.random_bool(mutation) {
                        child[p] = problem.mutate(p, child[p], &mut r);
                    }
                }
                problem.repair(&mut child);
                child
            })
            .collect();
        let child_costs: Vec<f64> = offspring.par_iter().map(|g| problem.cost(g)).collect::<Result<_, _>>()?;
        evaluations += offspring.len();

        let mut next: Vec<Vec<G::Gene>> = elites.iter().map(|&e| pop[e].clone()).collect();
        let mut next_costs: Vec<f64> = elites.iter().map(|&e| costs[e]).collect();
        next.extend(offspring);
        next_costs.extend(child_costs);
        pop = next;
        costs = next_costs;

        best = best_of(&costs);
        if costs[best] < best_cost - STAGNATION_EPS {
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        best_cost = best_cost.min(costs[best]);
        history.push(best_cost);
    };
    let stats = GaStats { generations: generation, evaluations, stop, best_history: history };
    Ok((pop[best].clone(), costs[best], stats))
}

fn default_groups(model: &CostModel, groups: Option<&CompartmentGroups>) -> CompartmentGroups {
    groups.cloned().unwrap_or_else(|| CompartmentGroups::singletons(model.fleet().len()))
}

fn interval_solution(
    costs: &GroupCosts,
    group_y: &[usize],
    planner: PlannerKind,
    ga: Option<GaStats>,
) -> Result<PlanSolution, PlanError> {
    let mut per_m = vec![0; costs.model.fleet().len()];
    for (g, members) in costs.groups.members.iter().enumerate() {
        for &m in members {
            per_m[m] = group_y[g];
        }
    }
    let plan = expand_interval_policy(&IntervalPolicy { intervals: per_m.clone() }, &costs.model.fleet().units(), costs.steps())?;
    PlanSolution::priced(costs.model, planner, plan, Some(per_m), ga)
}

/// Best fixed-interval policy found by the GA; one interval per group, or
/// per compartment when no groups are given.
pub fn optimize_intervals(model: &CostModel, groups: Option<&CompartmentGroups>, ga: &GAConfig) -> Result<PlanSolution, PlanError> {
    let groups = default_groups(model, groups);
    let costs = GroupCosts::new(model, &groups)?;
    let genome = IntervalGenome::new(&costs)?;
    let k = costs.steps() as u16;
    // Uniform policies, final-only included, seed the first generation.
    let seeds: Vec<Vec<u16>> = (1..=k).rev().map(|y| vec![y; groups.len()]).collect();
    let (best, _, stats) = run_ga(&genome, ga, seeds)?;
    let y: Vec<usize> = best.iter().map(|&v| v as usize).collect();
    interval_solution(&costs, &y, PlannerKind::Interval, Some(stats))
}

/// Best free schedule found by the GA, one row per group.
pub fn optimize_schedule(model: &CostModel, groups: &CompartmentGroups, ga: &GAConfig) -> Result<PlanSolution, PlanError> {
    optimize_schedule_seeded(model, groups, ga, &[])
}

/// [`optimize_schedule`] with extra per-group interval vectors whose
/// expansions join the first generation.
pub fn optimize_schedule_seeded(
    model: &CostModel,
    groups: &CompartmentGroups,
    ga: &GAConfig,
    warm: &[Vec<usize>],
) -> Result<PlanSolution, PlanError> {
    let costs = GroupCosts::new(model, groups)?;
    let k = costs.steps();
    let expand = |ys: &[usize]| -> Vec<bool> { ys.iter().flat_map(|&y| expansion_row(y.clamp(1, k), k)).collect() };
    let mut seeds: Vec<Vec<bool>> = warm.iter().filter(|w| w.len() == groups.len()).map(|w| expand(w)).collect();
    seeds.extend((1..=k).rev().map(|y| expand(&vec![y; groups.len()])));
    let genome = ScheduleGenome { costs: &costs };
    let (best, _, stats) = run_ga(&genome, ga, seeds)?;
    let plan = costs.plan(&genome.rows(&best))?;
    PlanSolution::priced(model, PlannerKind::Schedule, plan, None, Some(stats))
}

/// Exact optimum over all per-group schedules.
pub fn brute_force_plan(model: &CostModel, groups: &CompartmentGroups) -> Result<PlanSolution, PlanError> {
    let costs = GroupCosts::new(model, groups)?;
    let k = costs.steps();
    let free = groups.len() * (k - 1);
    if free > EXHAUSTIVE_BITS {
        return Err(PlanError::TooLarge(format!("{free} free decisions exceed {EXHAUSTIVE_BITS}")));
    }
    let decode = |code: u64| -> Vec<Vec<bool>> {
        (0..groups.len())
            .map(|g| (0..k).map(|i| i == k - 1 || code >> (g * (k - 1) + i) & 1 == 1).collect())
            .collect()
    };
    let eval = |code: u64| -> Result<f64, PlanError> {
        let rows = decode(code);
        let bits: Vec<Bits> = rows.iter().map(|r| Bits::from_row(r)).collect();
        let mut total = costs.setup_cost(&bits);
        for (g, row) in rows.iter().enumerate() {
            total += costs.row_cost(g, row)?;
        }
        Ok(total)
    };
    let (code, _) = argmin(1u64 << free, eval)?;
    let plan = costs.plan(&decode(code))?;
    PlanSolution::priced(model, PlannerKind::Schedule, plan, None, None)
}

/// Exact optimum over all per-group (or per-compartment) interval policies.
pub fn brute_force_intervals(model: &CostModel, groups: Option<&CompartmentGroups>) -> Result<PlanSolution, PlanError> {
    let groups = default_groups(model, groups);
    let costs = GroupCosts::new(model, &groups)?;
    let k = costs.steps() as u64;
    let n = groups.len() as u32;
    let total = k.checked_pow(n).filter(|&t| t <= 1 << EXHAUSTIVE_BITS).ok_or_else(|| {
        PlanError::TooLarge(format!("{k}^{n} interval policies exceed 2^{EXHAUSTIVE_BITS}"))
    })?;
    let genome = IntervalGenome::new(&costs)?;
    let decode = |mut code: u64| -> Vec<u16> {
        (0..n)
            .map(|_| {
                let y = (code % k) as u16 + 1;
                code /= k;
                y
            })
            .collect()
    };
    let (code, _) = argmin(total, |c| genome.cost(&decode(c)))?;
    let y: Vec<usize> = decode(code).iter().map(|&v| v as usize).collect();
    interval_solution(&costs, &y, PlannerKind::Interval, None)
}

// Lowest cost over codes `0..n`, ties to the lowest code.
fn argmin<F: Fn(u64) -> Result<f64, PlanError> + Sync>(n: u64, f: F) -> Result<(u64, f64), PlanError> {
    const CHUNK: u64 = 1 << 14;
    let chunks: Vec<(u64, f64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut best = (u64::MAX, f64::INFINITY);
            for code in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let v = f(code)?;
                if v < best.1 {
                    best = (code, v);
                }
            }
            Ok(best)
        })
        .collect::<Result<_, PlanError>>()?;
    Ok(chunks.into_iter().fold((u64::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b }))
}

/// The fixed-practice baseline priced on `model`.
pub fn practice_solution(model: &CostModel, months: &[f64]) -> Result<PlanSolution, PlanError> {
    let plan = practice_plan(months, &model.fleet().units(), model.horizon())?;
    let dt = model.horizon().delta_t();
    let intervals = months.iter().map(|m| ((m / dt).round() as usize).min(model.horizon().steps())).collect();
    PlanSolution::priced(model, PlannerKind::Practice, plan, Some(intervals), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta,
    ShipSetup,
}

impl SweepAxis {
    pub fn apply(self, cfg: &CostConfig, value: f64) -> CostConfig {
        match self {
            Self::Beta => CostConfig { repair_beta: value, ..*cfg },
            Self::ShipSetup => CostConfig { ship_setup_cost: value, ..*cfg },
        }
    }
}

/// Everything the planners need besides costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub ga: GAConfig,
    pub groups: CompartmentGroups,
    /// Interval genes per group rather than per compartment.
    pub interval_by_group: bool,
    /// Practice interval in months for each compartment.
    pub practice_months: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub planner: PlannerKind,
    pub cost: f64,
    pub events: usize,
    pub inspections: usize,
    pub event_sizes: Vec<usize>,
    pub solution: PlanSolution,
}

/// Re-plans for every value on `axis`. Each value gets its own GA runs with
/// the configured seed; afterwards every value keeps the cheapest of the
/// plans found for any value, so the sweep compares like with like.
pub fn sensitivity_sweep(
    model: &CostModel,
    axis: SweepAxis,
    values: &[f64],
    settings: &PlannerSettings,
) -> Result<Vec<SweepRow>, PlanError> {
    if values.is_empty() {
        return Err(PlanError::Config("sweep needs at least one value".into()));
    }
    let models: Vec<CostModel> =
        values.iter().map(|&v| model.with_config(axis.apply(model.config(), v))).collect::<Result<_, _>>()?;
    let interval_groups = settings.interval_by_group.then_some(&settings.groups);

    let mut found: Vec<[PlanSolution; 2]> = Vec::with_capacity(values.len());
    for (m, v) in models.iter().zip(values) {
        log::info!("sweep {axis:?} = {v}: optimizing");
        let interval = optimize_intervals(m, interval_groups, &settings.ga)?;
        let warm: Vec<Vec<usize>> = group_intervals(&interval, &settings.groups).into_iter().collect();
        let schedule = optimize_schedule_seeded(m, &settings.groups, &settings.ga, &warm)?;
        found.push([interval, schedule]);
    }

    let mut rows = Vec::new();
    for (i, (m, &value)) in models.iter().zip(values).enumerate() {
        let practice = practice_solution(m, &settings.practice_months)?;
        rows.push(sweep_row(value, practice));
        for slot in 0..2 {
            let mut best = found[i][slot].clone();
            for (j, other) in found.iter().enumerate() {
                if j == i {
                    continue;
                }
                let cost = m.plan_cost(&other[slot].plan)?;
                if cost.total < best.cost.total {
                    best = PlanSolution { cost, ga: best.ga.clone(), ..other[slot].clone() };
                }
            }
            rows.push(sweep_row(value, best));
        }
    }
    Ok(rows)
}

/// Per-group intervals of an interval solution, when every group's members
/// share one interval.
pub fn group_intervals(solution: &PlanSolution, groups: &CompartmentGroups) -> Option<Vec<usize>> {
    let per_m = solution.intervals.as_ref()?;
    groups
        .members
        .iter()
        .map(|g| {
            let y = per_m[g[0]];
            g.iter().all(|&m| per_m[m] == y).then_some(y)
        })
        .collect()
}

fn sweep_row(value: f64, solution: PlanSolution) -> SweepRow {
    SweepRow {
        value,
        planner: solution.planner,
        cost: solution.cost.total,
        events: solution.cost.events.len(),
        inspections: solution.plan.inspection_count(),
        event_sizes: solution.cost.events.iter().map(|e| e.compartments).collect(),
        solution,
    }
}
