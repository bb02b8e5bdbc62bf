use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fleet::{CompartmentHistory, FleetDataset};
use crate::nhpp::PowerLawParams;
use crate::rng;

use super::likelihood::{log_likelihood, pooled_log_likelihood, LogParams};
use super::InferenceError;

/// Search box in log space; the likelihood of all-zero data keeps rising as
/// `a → 0`, so the optimizer has to stop somewhere.
pub const LN_A_BOUNDS: (f64, f64) = (-30.0, 10.0);
pub const LN_B_BOUNDS: (f64, f64) = (-4.0, 3.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleOptions {
    pub starts: usize,
    pub jitter: f64,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Hold `ln b` fixed and fit `ln a` alone.
    pub fixed_ln_b: Option<f64>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { starts: 5, jitter: 1.0, seed: 0, max_iterations: 5_000, tolerance: 1e-12, fixed_ln_b: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleFit {
    pub params: PowerLawParams,
    pub log_params: LogParams,
    pub log_likelihood: f64,
    /// Too few informative intervals to identify the free parameters.
    pub degenerate: bool,
    pub converged: bool,
    pub evaluations: usize,
}

pub fn fit_mle(history: &CompartmentHistory, initial: LogParams, options: &MleOptions) -> Result<MleFit, InferenceError> {
    let informative = informative_intervals(std::iter::once(history));
    fit_with(|p| log_likelihood(p, history), informative, initial, options)
}

pub fn fit_mle_pooled(dataset: &FleetDataset, initial: LogParams, options: &MleOptions) -> Result<MleFit, InferenceError> {
    let informative = informative_intervals(dataset.compartments().iter());
    fit_with(|p| pooled_log_likelihood(p, dataset), informative, initial, options)
}

// Distinct (start, end) windows with at least one defect.
fn informative_intervals<'a>(histories: impl Iterator<Item = &'a CompartmentHistory>) -> usize {
    let mut set = HashSet::new();
    for h in histories {
        for (t0, t1, n) in h.intervals() {
            if n > 0 {
                set.insert((t0.to_bits(), t1.to_bits()));
            }
        }
    }
    set.len()
}

fn fit_with<F: Fn(&PowerLawParams) -> f64>(
    ll: F,
    informative: usize,
    initial: LogParams,
    options: &MleOptions,
) -> Result<MleFit, InferenceError> {
    if options.starts == 0 {
        return Err(InferenceError::Config("MLE needs at least one start".into()));
    }
    let free = if options.fixed_ln_b.is_some() { 1 } else { 2 };
    let degenerate = informative < free;

    let unpack = |x: &[f64]| -> (f64, f64) {
        match options.fixed_ln_b {
            Some(lb) => (x[0], lb),
            None => (x[0], x[1]),
        }
    };
    // Negative log-likelihood at the box-clamped point plus a quadratic
    // pull back into the box.
    let objective = |x: &[f64]| -> f64 {
        let (la, lb) = unpack(x);
        let ca = la.clamp(LN_A_BOUNDS.0, LN_A_BOUNDS.1);
        let cb = lb.clamp(LN_B_BOUNDS.0, LN_B_BOUNDS.1);
        let penalty = (la - ca).powi(2) + (lb - cb).powi(2);
        let value = match PowerLawParams::from_log(ca, cb) {
            Ok(p) => -ll(&p),
            Err(_) => f64::INFINITY,
        };
        if value.is_nan() {
            f64::INFINITY
        } else {
            value + 1e3 * penalty
        }
    };

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evaluations = 0;
    for s in 0..options.starts {
        let mut r = rng::stream(options.seed, 0, s as u64, 0);
        let mut x0 = vec![initial.ln_a];
        if free == 2 {
            x0.push(initial.ln_b);
        }
        if s > 0 {
            for v in &mut x0 {
                *v += options.jitter * r.sample::<f64, _>(StandardNormal);
            }
        }
        let res = nelder_mead(&objective, &x0, 0.5, options.tolerance, options.max_iterations);
        evaluations += res.evaluations;
        if best.as_ref().is_none_or(|b| res.value < b.1) {
            best = Some((res.point, res.value, res.converged));
        }
    }
    let (x, _, converged) = best.expect("at least one start");
    let (la, lb) = unpack(&x);
    let la = la.clamp(LN_A_BOUNDS.0, LN_A_BOUNDS.1);
    let lb = lb.clamp(LN_B_BOUNDS.0, LN_B_BOUNDS.1);
    let params = PowerLawParams::from_log(la, lb)?;
    if degenerate {
        log::warn!("MLE: only {informative} informative interval(s); (a, b) is not identifiable");
    }
    if !converged {
        log::warn!("MLE: simplex search hit its iteration cap");
    }
    Ok(MleFit {
        params,
        log_params: LogParams { ln_a: la, ln_b: lb },
        log_likelihood: ll(&params),
        degenerate,
        converged,
        evaluations,
    })
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Nelder–Mead minimization with standard coefficients, restarted once from
/// the first optimum to shake off premature collapse.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> SimplexResult {
    let first = nelder_mead_once(f, x0, step, tol, max_iter);
    let second = nelder_mead_once(f, &first.point, step * 0.1, tol, max_iter);
    let evaluations = first.evaluations + second.evaluations;
    if second.value <= first.value {
        SimplexResult { evaluations, ..second }
    } else {
        SimplexResult { evaluations, ..first }
    }
}

fn nelder_mead_once<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> SimplexResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = n + 1;
    let mut converged = false;

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= tol * (values[0].abs() + tol) && size < 1e-9 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + c * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-1.0);
        let fr = f(&xr);
        evaluations += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evaluations += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
                evaluations += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    SimplexResult { point: simplex[best].clone(), value: values[best], converged, evaluations }
}
