use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fleet::{CompartmentHistory, FleetDataset};
use crate::rng;

use super::diagnostics::Diagnostics;
use super::likelihood::{log_posterior, pooled_log_posterior, LogParams, Priors};
use super::mle::nelder_mead;
use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MCMCConfig {
    pub chains: usize,
    pub warmup_draws: usize,
    pub kept_draws: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    /// Keep every `thin`-th post-warmup iteration.
    pub thin: usize,
}

impl Default for MCMCConfig {
    fn default() -> Self {
        Self { chains: 4, warmup_draws: 2_000, kept_draws: 2_000, seed: 0, target_acceptance: 0.3, thin: 1 }
    }
}

impl MCMCConfig {
    /// Short runs for desk-scale experiments.
    pub fn fast(seed: u64) -> Self {
        Self { chains: 4, warmup_draws: 600, kept_draws: 500, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.chains == 0 || self.warmup_draws == 0 || self.kept_draws == 0 || self.thin == 0 {
            return Err(InferenceError::Config("MCMC chains, warmup, kept draws and thinning must all be ≥ 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(InferenceError::Config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        Ok(())
    }

    pub(crate) fn iterations(&self) -> usize {
        self.warmup_draws + self.kept_draws * self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Individual,
    Pooled,
    Hierarchical,
}

/// Draws for one compartment, stored chain after chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentDraws {
    pub key: String,
    pub ln_a: Vec<f64>,
    pub ln_b: Vec<f64>,
    /// Log posterior at each draw; empty for hierarchical fits, where the
    /// compartment's density depends on the hyperparameters too.
    pub log_posterior: Vec<f64>,
}

impl CompartmentDraws {
    pub fn len(&self) -> usize {
        self.ln_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_a.is_empty()
    }

    pub fn log_params(&self) -> impl Iterator<Item = LogParams> + '_ {
        self.ln_a.iter().zip(&self.ln_b).map(|(&ln_a, &ln_b)| LogParams { ln_a, ln_b })
    }

    /// Posterior means of `ln a` and `ln b`.
    pub fn mean(&self) -> LogParams {
        let n = self.len() as f64;
        LogParams { ln_a: self.ln_a.iter().sum::<f64>() / n, ln_b: self.ln_b.iter().sum::<f64>() / n }
    }

    /// Concatenate the draws of several compartments under a new key.
    pub fn concat<'a>(key: &str, parts: impl IntoIterator<Item = &'a CompartmentDraws>) -> Self {
        let mut out = Self { key: key.to_string(), ln_a: Vec::new(), ln_b: Vec::new(), log_posterior: Vec::new() };
        for p in parts {
            out.ln_a.extend(&p.ln_a);
            out.ln_b.extend(&p.ln_b);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperDraws {
    pub mu_ln_a: Vec<f64>,
    pub sigma_ln_a: Vec<f64>,
    pub mu_ln_b: Vec<f64>,
    pub sigma_ln_b: Vec<f64>,
}

/// Frozen post-warmup state of one chain's sampler, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub acceptance_rate: f64,
    /// Lower-triangular proposal factor `(l11, l21, l22)`, scale included.
    pub proposal: [f64; 3],
    /// State after the last warmup iteration.
    pub warmup_end: [f64; 2],
    /// Log reference time `τ` of the proposal coordinates, see [`to_ridge`].
    #[serde(default)]
    pub ridge_log_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub mode: FitMode,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub config: MCMCConfig,
    pub compartments: Vec<CompartmentDraws>,
    pub hyper: Option<HyperDraws>,
    /// One entry per chain for individual and pooled fits.
    pub chain_info: Vec<ChainInfo>,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn compartment(&self, key: &str) -> Option<&CompartmentDraws> {
        self.compartments.iter().find(|c| c.key == key)
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub(crate) fn chain_slices<'a>(&self, v: &'a [f64]) -> Vec<&'a [f64]> {
        v.chunks(self.draws_per_chain).collect()
    }

    pub(crate) fn compute_diagnostics(&mut self) {
        let mut d = Diagnostics::default();
        let single = self.compartments.len() == 1 && self.hyper.is_none();
        for c in &self.compartments {
            let prefix = if single { String::new() } else { format!("{}:", c.key) };
            d.add(&format!("{prefix}ln_a"), &self.chain_slices(&c.ln_a));
            d.add(&format!("{prefix}ln_b"), &self.chain_slices(&c.ln_b));
        }
        if let Some(h) = &self.hyper {
            d.add("mu_ln_a", &self.chain_slices(&h.mu_ln_a));
            d.add("sigma_ln_a", &self.chain_slices(&h.sigma_ln_a));
            d.add("mu_ln_b", &self.chain_slices(&h.mu_ln_b));
            d.add("sigma_ln_b", &self.chain_slices(&h.sigma_ln_b));
        }
        for w in &d.warnings {
            log::debug!("MCMC convergence: {w}");
        }
        self.diagnostics = d;
    }
}

/// Random-walk Metropolis proposal in two dimensions whose covariance and
/// scale are learned during warmup and frozen afterwards.
#[derive(Debug, Clone)]
pub(crate) struct AdaptiveProposal {
    chol: [f64; 3],
    log_scale: f64,
    count: f64,
    mean: [f64; 2],
    comoment: [f64; 3],
    warmup: usize,
    target: f64,
}

const INITIAL_LOG_SCALE: f64 = 0.520_207_5; // ln(2.38 / √2)

impl AdaptiveProposal {
    pub(crate) fn new(cov: [f64; 3], warmup: usize, target: f64) -> Self {
        let chol = cholesky(cov).unwrap_or([0.1, 0.0, 0.1]);
        Self { chol, log_scale: INITIAL_LOG_SCALE, count: 0.0, mean: [0.0; 2], comoment: [0.0; 3], warmup, target }
    }

    /// Lower-triangular factor with the scale folded in.
    pub(crate) fn factor(&self) -> [f64; 3] {
        let s = self.log_scale.exp();
        [s * self.chol[0], s * self.chol[1], s * self.chol[2]]
    }

    pub(crate) fn adapt(&mut self, iter: usize, state: [f64; 2], accept_prob: f64) {
        if iter >= self.warmup {
            return;
        }
        self.log_scale += (accept_prob - self.target) / ((iter + 1) as f64).powf(0.6);
        self.log_scale = self.log_scale.clamp(-15.0, 5.0);
        // Moments are collected from the second quarter of warmup on.
        if iter < self.warmup / 4 {
            return;
        }
        self.count += 1.0;
        let d0 = state[0] - self.mean[0];
        let d1 = state[1] - self.mean[1];
        self.mean[0] += d0 / self.count;
        self.mean[1] += d1 / self.count;
        self.comoment[0] += d0 * (state[0] - self.mean[0]);
        self.comoment[1] += d0 * (state[1] - self.mean[1]);
        self.comoment[2] += d1 * (state[1] - self.mean[1]);
        if self.count >= 20.0 && (iter + 1) % 25 == 0 {
            let n = self.count - 1.0;
            let (v0, v1) = (self.comoment[0] / n + 1e-12, self.comoment[2] / n + 1e-12);
            // Diagonal until half of warmup, full covariance after.
            let cov = if iter < self.warmup / 2 { [v0, 0.0, v1] } else { [v0, self.comoment[1] / n, v1] };
            if let Some(c) = cholesky(cov) {
                self.chol = c;
            }
        }
    }
}

/// Cholesky factor of `[[c0, c1], [c1, c2]]` as `(l11, l21, l22)`.
pub(crate) fn cholesky(cov: [f64; 3]) -> Option<[f64; 3]> {
    if !(cov[0] > 0.0) {
        return None;
    }
    let l11 = cov[0].sqrt();
    let l21 = cov[1] / l11;
    let rest = cov[2] - l21 * l21;
    if !(rest > 0.0) || !rest.is_finite() {
        return None;
    }
    Some([l11, l21, rest.sqrt()])
}

/// Proposal coordinates `(ln a + b·τ, ln b)`: the log expected count up to
/// `e^τ` and the log shape. With few defects the posterior in `(ln a, ln b)`
/// is a curved ridge along which the first coordinate barely moves. The map
/// has unit Jacobian, so Metropolis ratios need no correction.
pub(crate) fn to_ridge(x: [f64; 2], tau: f64) -> [f64; 2] {
    if tau == 0.0 {
        return x;
    }
    [x[0] + x[1].exp() * tau, x[1]]
}

pub(crate) fn from_ridge(w: [f64; 2], tau: f64) -> [f64; 2] {
    if tau == 0.0 {
        return w;
    }
    [w[0] - w[1].exp() * tau, w[1]]
}

/// `τ` for a set of histories: mean log of the last inspection age over
/// compartments with data, zero without data.
pub(crate) fn ridge_log_time<'a>(histories: impl IntoIterator<Item = &'a CompartmentHistory>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for h in histories {
        let t = h.last_time();
        if !h.is_empty() && t > 0.0 {
            sum += t.ln();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One Metropolis transition from `x`, proposing in ridge coordinates with
/// reference `tau`. The state itself stays in `(ln a, ln b)`. Draw order
/// (two normals, then one uniform) is part of the replay contract.
pub(crate) fn rwm_step<R: Rng, F: Fn([f64; 2]) -> f64>(
    rng: &mut R,
    factor: [f64; 3],
    tau: f64,
    x: [f64; 2],
    lp_x: f64,
    target: &F,
) -> ([f64; 2], f64, f64) {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let w = to_ridge(x, tau);
    let y = from_ridge([w[0] + factor[0] * z0, w[1] + factor[1] * z0 + factor[2] * z1], tau);
    let lp_y = target(y);
    let log_ratio = lp_y - lp_x;
    let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.exp().min(1.0) };
    if u.ln() < log_ratio {
        (y, lp_y, accept_prob)
    } else {
        (x, lp_x, accept_prob)
    }
}

struct ChainRun {
    ln_a: Vec<f64>,
    ln_b: Vec<f64>,
    log_posterior: Vec<f64>,
    info: ChainInfo,
}

/// Mode and Laplace covariance of a 2-D log density, used to start chains.
pub(crate) fn laplace<F: Fn([f64; 2]) -> f64>(target: &F, starts: &[[f64; 2]]) -> ([f64; 2], [f64; 3]) {
    let neg = |x: &[f64]| {
        let v = -target([x[0], x[1]]);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = (starts[0], f64::INFINITY);
    for s in starts {
        let r = nelder_mead(&neg, s, 0.5, 1e-12, 4_000);
        if r.value < best.1 {
            best = ([r.point[0], r.point[1]], r.value);
        }
    }
    let x = best.0;
    let h = 1e-3;
    let f = |dx: f64, dy: f64| target([x[0] + dx, x[1] + dy]);
    let f0 = f(0.0, 0.0);
    let haa = (f(h, 0.0) - 2.0 * f0 + f(-h, 0.0)) / (h * h);
    let hbb = (f(0.0, h) - 2.0 * f0 + f(0.0, -h)) / (h * h);
    let hab = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
    // Covariance is the inverse of the negative Hessian.
    let (p, q, r) = (-haa, -hab, -hbb);
    let det = p * r - q * q;
    let cov = if p > 0.0 && det > 0.0 && det.is_finite() { [r / det, -q / det, p / det] } else { [0.01, 0.0, 0.01] };
    (x, cov)
}

/// `center` and `cov` are in ridge coordinates.
fn run_chain<F: Fn([f64; 2]) -> f64>(
    target: &F,
    center: [f64; 2],
    cov: [f64; 3],
    tau: f64,
    cfg: &MCMCConfig,
    chain: usize,
) -> ChainRun {
    let lane = chain as u64;
    // Overdispersed start around the mode.
    let mut init_rng = rng::stream(cfg.seed, lane, u64::MAX, 0);
    let l = cholesky(cov).unwrap_or([0.1, 0.0, 0.1]);
    let z0: f64 = init_rng.sample(StandardNormal);
    let z1: f64 = init_rng.sample(StandardNormal);
    let mut x = from_ridge([center[0] + 1.5 * l[0] * z0, center[1] + 1.5 * (l[1] * z0 + l[2] * z1)], tau);
    let mut lp = target(x);
    if !lp.is_finite() {
        x = from_ridge(center, tau);
        lp = target(x);
    }

    let mut proposal = AdaptiveProposal::new(cov, cfg.warmup_draws, cfg.target_acceptance);
    let mut run = ChainRun {
        ln_a: Vec::with_capacity(cfg.kept_draws),
        ln_b: Vec::with_capacity(cfg.kept_draws),
        log_posterior: Vec::with_capacity(cfg.kept_draws),
        info: ChainInfo { acceptance_rate: 0.0, proposal: [0.0; 3], warmup_end: x, ridge_log_time: tau },
    };
    let mut accepted = 0usize;
    for iter in 0..cfg.iterations() {
        if iter == cfg.warmup_draws {
            run.info.proposal = proposal.factor();
            run.info.warmup_end = x;
        }
        let factor = if iter < cfg.warmup_draws { proposal.factor() } else { run.info.proposal };
        let mut r = rng::stream(cfg.seed, lane, iter as u64, 0);
        let (y, lp_y, prob) = rwm_step(&mut r, factor, tau, x, lp, target);
        if iter >= cfg.warmup_draws && y != x {
            accepted += 1;
        }
        x = y;
        lp = lp_y;
        proposal.adapt(iter, to_ridge(x, tau), prob);
        if iter >= cfg.warmup_draws && (iter - cfg.warmup_draws) % cfg.thin == 0 {
            run.ln_a.push(x[0]);
            run.ln_b.push(x[1]);
            run.log_posterior.push(lp);
        }
    }
    run.info.acceptance_rate = accepted as f64 / (cfg.kept_draws * cfg.thin) as f64;
    run
}

fn sample_2d<F: Fn([f64; 2]) -> f64 + Sync>(
    key: &str,
    mode: FitMode,
    target: F,
    starts: &[[f64; 2]],
    tau: f64,
    cfg: &MCMCConfig,
) -> Result<PosteriorSamples, InferenceError> {
    cfg.validate()?;
    let ridge_target = |w: [f64; 2]| target(from_ridge(w, tau));
    let ridge_starts: Vec<[f64; 2]> = starts.iter().map(|&x| to_ridge(x, tau)).collect();
    let (center, cov) = laplace(&ridge_target, &ridge_starts);
    let runs: Vec<ChainRun> =
        (0..cfg.chains).into_par_iter().map(|c| run_chain(&target, center, cov, tau, cfg, c)).collect();
    let mut draws = CompartmentDraws { key: key.to_string(), ln_a: Vec::new(), ln_b: Vec::new(), log_posterior: Vec::new() };
    let mut chain_info = Vec::with_capacity(runs.len());
    for run in runs {
        draws.ln_a.extend(run.ln_a);
        draws.ln_b.extend(run.ln_b);
        draws.log_posterior.extend(run.log_posterior);
        chain_info.push(run.info);
    }
    let mut samples = PosteriorSamples {
        mode,
        chains: cfg.chains,
        draws_per_chain: cfg.kept_draws,
        config: *cfg,
        compartments: vec![draws],
        hyper: None,
        chain_info,
        diagnostics: Diagnostics::default(),
    };
    samples.compute_diagnostics();
    Ok(samples)
}

// Prior mean plus a crude homogeneous-rate guess from the data.
fn starting_points(priors: &Priors, defects: u64, span: f64) -> Vec<[f64; 2]> {
    let mut starts = vec![[priors.mean_ln_a, priors.mean_ln_b]];
    if defects > 0 && span > 0.0 {
        starts.push([(defects as f64 / span).ln(), 0.0]);
    }
    starts
}

/// Posterior of one compartment's `(ln a, ln b)` under independent Normal
/// priors. Works without data, in which case it samples the prior.
pub fn fit_bayes_individual(
    history: &CompartmentHistory,
    priors: &Priors,
    cfg: &MCMCConfig,
) -> Result<PosteriorSamples, InferenceError> {
    priors.validate()?;
    let target = |x: [f64; 2]| log_posterior(LogParams { ln_a: x[0], ln_b: x[1] }, history, priors);
    let starts = starting_points(priors, history.total_defects(), history.last_time() - history.origin());
    sample_2d(&history.key(), FitMode::Individual, target, &starts, ridge_log_time([history]), cfg)
}

/// One `(ln a, ln b)` shared by every compartment of the fleet.
pub fn fit_bayes_pooled(
    dataset: &FleetDataset,
    priors: &Priors,
    cfg: &MCMCConfig,
) -> Result<PosteriorSamples, InferenceError> {
    priors.validate()?;
    let target = |x: [f64; 2]| pooled_log_posterior(LogParams { ln_a: x[0], ln_b: x[1] }, dataset, priors);
    let defects: u64 = dataset.compartments().iter().map(|c| c.total_defects()).sum();
    let exposure: f64 = dataset.compartments().iter().map(|c| c.last_time() - c.origin()).sum();
    let starts = starting_points(priors, defects, exposure);
    sample_2d("pooled", FitMode::Pooled, target, &starts, ridge_log_time(dataset.compartments()), cfg)
}

/// Recompute the state after retained draw `draw` of `chain` from the
/// previous state, the frozen proposal and the iteration's random stream.
/// Requires `thin = 1`, since thinned-out states are not recorded.
pub fn replay_transition<F: Fn(LogParams) -> f64>(
    samples: &PosteriorSamples,
    target: F,
    chain: usize,
    draw: usize,
) -> Result<LogParams, InferenceError> {
    let cfg = &samples.config;
    if cfg.thin != 1 {
        return Err(InferenceError::Config("replay needs unthinned draws".into()));
    }
    if samples.compartments.len() != 1 || chain >= samples.chains || draw >= samples.draws_per_chain {
        return Err(InferenceError::Config(format!("no draw {draw} in chain {chain}")));
    }
    let c = &samples.compartments[0];
    let info = &samples.chain_info[chain];
    let prev = if draw == 0 {
        info.warmup_end
    } else {
        let i = chain * samples.draws_per_chain + draw - 1;
        [c.ln_a[i], c.ln_b[i]]
    };
    let f = |x: [f64; 2]| target(LogParams { ln_a: x[0], ln_b: x[1] });
    let mut r = rng::stream(cfg.seed, chain as u64, (cfg.warmup_draws + draw) as u64, 0);
    let (next, _, _) = rwm_step(&mut r, info.proposal, info.ridge_log_time, prev, f(prev), &f);
    Ok(LogParams { ln_a: next[0], ln_b: next[1] })
}

/// Hyperprior means taken from a pooled flat-prior fit. Spreads and σ
/// bounds stay as given in `base`.
pub fn hyperpriors_from_pooled(pooled: &PosteriorSamples, base: &super::HyperPriors) -> super::HyperPriors {
    let m = pooled.compartments[0].mean();
    super::HyperPriors { m_ln_a: m.ln_a, m_ln_b: m.ln_b, ..*base }
}
