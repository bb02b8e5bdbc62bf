//! Inspection plans on a regular planning grid.
//!
//! Grid point `k` (1-based, `k = 1..=K`) sits at `t_now + k·Δt`. A plan says
//! for every compartment which grid points it is inspected at; the last grid
//! point is always an inspection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nhpp::NhppError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan violates a constraint: {0}")]
    Constraint(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("practice interval of {months} months is not a multiple of the {delta_t}-month grid")]
    OffGrid { months: f64, delta_t: f64 },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Nhpp(#[from] NhppError),
}

/// Regular grid `t_k = t_now + k·Δt`, `k = 0..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningHorizon {
    t_now: f64,
    delta_t: f64,
    k: usize,
}

impl PlanningHorizon {
    pub fn new(t_now: f64, delta_t: f64, k: usize) -> Result<Self, PlanError> {
        if !(t_now >= 0.0 && t_now.is_finite()) {
            return Err(PlanError::Config(format!("t_now must be a nonnegative time, got {t_now}")));
        }
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(PlanError::Config(format!("grid spacing must be positive, got {delta_t}")));
        }
        if k == 0 {
            return Err(PlanError::Config("the horizon needs at least one grid point".into()));
        }
        Ok(Self { t_now, delta_t, k })
    }

    /// Grid from `t_now` to `t_end`; the span must be a whole number of steps.
    pub fn from_span(t_now: f64, t_end: f64, delta_t: f64) -> Result<Self, PlanError> {
        if !(t_end > t_now) {
            return Err(PlanError::Config(format!("horizon end {t_end} must follow its start {t_now}")));
        }
        let steps = (t_end - t_now) / delta_t;
        let k = steps.round();
        if (steps - k).abs() > 1e-9 * steps.max(1.0) || k < 1.0 {
            return Err(PlanError::Config(format!(
                "horizon [{t_now}, {t_end}] is not a whole number of {delta_t}-month steps"
            )));
        }
        Self::new(t_now, delta_t, k as usize)
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.k)
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Number of grid points `K`.
    pub fn steps(&self) -> usize {
        self.k
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_now + k as f64 * self.delta_t
    }
}

/// One compartment of one ship.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Unit {
    pub ship_id: String,
    pub compartment_id: String,
}

impl Unit {
    pub fn new(ship_id: impl Into<String>, compartment_id: impl Into<String>) -> Self {
        Self { ship_id: ship_id.into(), compartment_id: compartment_id.into() }
    }

    pub fn key(&self) -> String {
        crate::fleet::compartment_key(&self.ship_id, &self.compartment_id)
    }
}

/// Binary inspection decisions `x[m][k]`, stored for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    steps: usize,
    units: Vec<Unit>,
    rows: Vec<Vec<bool>>,
}

impl SchedulePlan {
    /// Rows are indexed by grid point minus one and must end in an inspection.
    pub fn new(steps: usize, units: Vec<Unit>, rows: Vec<Vec<bool>>) -> Result<Self, PlanError> {
        if units.len() != rows.len() {
            return Err(PlanError::Constraint(format!("{} units but {} rows", units.len(), rows.len())));
        }
        for (u, r) in units.iter().zip(&rows) {
            if r.len() != steps {
                return Err(PlanError::Constraint(format!("row of {} has {} entries, expected {steps}", u.key(), r.len())));
            }
            if r.last() != Some(&true) {
                return Err(PlanError::Constraint(format!("{} lacks the final inspection", u.key())));
            }
        }
        Ok(Self { steps, units, rows })
    }

    /// Like [`SchedulePlan::new`] but sets the final inspection instead of
    /// rejecting rows without it.
    pub fn repaired(steps: usize, units: Vec<Unit>, mut rows: Vec<Vec<bool>>) -> Result<Self, PlanError> {
        for r in &mut rows {
            if let Some(last) = r.last_mut() {
                *last = true;
            }
        }
        Self::new(steps, units, rows)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    /// Whether compartment `m` is inspected at grid point `k` (1-based).
    pub fn inspected(&self, m: usize, k: usize) -> bool {
        k >= 1 && k <= self.steps && self.rows[m][k - 1]
    }

    /// Grid points (1-based) at which compartment `m` is inspected.
    pub fn inspection_indices(&self, m: usize) -> Vec<usize> {
        (1..=self.steps).filter(|&k| self.rows[m][k - 1]).collect()
    }

    /// Latest grid index `ℓ < k` with an inspection of `m`, or 0 (the floor).
    pub fn last_inspection_index(&self, m: usize, k: usize) -> usize {
        (1..k.min(self.steps + 1)).rev().find(|&l| self.rows[m][l - 1]).unwrap_or(0)
    }

    /// Distinct ship identifiers in order of first appearance.
    pub fn ships(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for u in &self.units {
            if !out.contains(&u.ship_id.as_str()) {
                out.push(&u.ship_id);
            }
        }
        out
    }

    /// `(k, ship, number of compartments inspected)` for every event.
    pub fn events(&self) -> Vec<(usize, String, usize)> {
        let ships = self.ships();
        let mut out = Vec::new();
        for k in 1..=self.steps {
            for s in &ships {
                let n = (0..self.units.len()).filter(|&m| self.units[m].ship_id == *s && self.rows[m][k - 1]).count();
                if n > 0 {
                    out.push((k, s.to_string(), n));
                }
            }
        }
        out
    }

    pub fn inspection_count(&self) -> usize {
        self.rows.iter().map(|r| r.iter().filter(|&&x| x).count()).sum()
    }
}

/// Every compartment inspected each `y_m` grid steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPolicy {
    pub intervals: Vec<usize>,
}

impl IntervalPolicy {
    pub fn validate(&self, steps: usize) -> Result<(), PlanError> {
        match self.intervals.iter().find(|&&y| y == 0 || y > steps) {
            Some(y) => Err(PlanError::Constraint(format!("interval {y} outside 1..={steps}"))),
            None => Ok(()),
        }
    }
}

/// Inspect where `k` is a multiple of `y`, plus the forced final point.
pub fn expansion_row(y: usize, steps: usize) -> Vec<bool> {
    (1..=steps).map(|k| k % y == 0 || k == steps).collect()
}

pub fn expand_interval_policy(policy: &IntervalPolicy, units: &[Unit], steps: usize) -> Result<SchedulePlan, PlanError> {
    policy.validate(steps)?;
    if policy.intervals.len() != units.len() {
        return Err(PlanError::Constraint(format!("{} intervals for {} units", policy.intervals.len(), units.len())));
    }
    let rows = policy.intervals.iter().map(|&y| expansion_row(y, steps)).collect();
    SchedulePlan::new(steps, units.to_vec(), rows)
}

/// Fixed-practice plan: each compartment keeps its interval in months,
/// which must be a whole number of grid steps.
pub fn practice_plan(months: &[f64], units: &[Unit], horizon: &PlanningHorizon) -> Result<SchedulePlan, PlanError> {
    let mut intervals = Vec::with_capacity(months.len());
    for &m in months {
        let steps = m / horizon.delta_t();
        let y = steps.round();
        if !(m > 0.0) || (steps - y).abs() > 1e-9 * steps.max(1.0) || y < 1.0 {
            return Err(PlanError::OffGrid { months: m, delta_t: horizon.delta_t() });
        }
        intervals.push((y as usize).min(horizon.steps()));
    }
    expand_interval_policy(&IntervalPolicy { intervals }, units, horizon.steps())
}
