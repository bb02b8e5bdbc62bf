use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::fleet::FleetDataset;
use crate::nhpp::PowerLawParams;
use crate::rng;

use super::diagnostics::Diagnostics;
use super::likelihood::{ln_normal, log_likelihood, pooled_log_likelihood, HyperPriors};
use super::mcmc::{laplace, rwm_step, AdaptiveProposal, CompartmentDraws, FitMode, HyperDraws, MCMCConfig, PosteriorSamples};
use super::InferenceError;

// One-dimensional random-walk target for the σ updates.
const SIGMA_TARGET_ACCEPTANCE: f64 = 0.44;

#[derive(Debug, Clone)]
struct State {
    theta: Vec<[f64; 2]>,
    lik: Vec<f64>,
    mu: [f64; 2],
    sigma: [f64; 2],
}

struct SigmaStep {
    log_step: [f64; 2],
}

fn adapt(log_step: &mut f64, log_ratio: f64, iter: usize) {
    let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.exp().min(1.0) };
    *log_step += (prob - SIGMA_TARGET_ACCEPTANCE) / ((iter + 1) as f64).powf(0.6);
    *log_step = log_step.clamp(-20.0, 2.0);
}

/// Fold `x` back into `[lo, hi]` by mirroring at the walls; the map keeps a
/// symmetric random-walk proposal symmetric.
pub(crate) fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * w);
    if y > w {
        y = 2.0 * w - y;
    }
    lo + y
}

fn ln_sigma_conditional(sigma: f64, sum_sq: f64, n: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    -n * sigma.ln() - sum_sq / (2.0 * sigma * sigma)
}

/// Three-stage model: per-compartment `(ln a, ln b)` drawn from Normal
/// populations whose means have Normal hyperpriors and whose standard
/// deviations have Uniform hyperpriors.
///
/// Each iteration draws both population means exactly from their Normal
/// conditionals, moves both σ by a reflected random walk inside their
/// bounds, then moves every compartment's pair by its own adaptive
/// random-walk Metropolis step. Last come the joint moves: both means shift
/// together with every compartment, and each σ stretches together with every
/// deviation from its mean, jointly and one at a time. Without them the
/// chain crawls along the trade-off between the two population spreads.
pub fn fit_bayes_hierarchical(
    dataset: &FleetDataset,
    hyper: &HyperPriors,
    cfg: &MCMCConfig,
) -> Result<PosteriorSamples, InferenceError> {
    cfg.validate()?;
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    let histories = dataset.compartments();

    // Chains start around the pooled mode with flat priors.
    let pooled = |x: [f64; 2]| match PowerLawParams::from_log(x[0], x[1]) {
        Ok(p) => pooled_log_likelihood(&p, dataset) - 1e-6 * (x[0] * x[0] + x[1] * x[1]),
        Err(_) => f64::NEG_INFINITY,
    };
    let (center, _) = laplace(&pooled, &[[hyper.m_ln_a, hyper.m_ln_b], [hyper.m_ln_a, 0.0]]);

    let runs: Vec<(Vec<State>, f64)> =
        (0..cfg.chains).into_par_iter().map(|c| run_chain(dataset, hyper, cfg, c, center)).collect();

    let n = histories.len();
    let mut compartments: Vec<CompartmentDraws> = histories
        .iter()
        .map(|h| CompartmentDraws { key: h.key(), ln_a: Vec::new(), ln_b: Vec::new(), log_posterior: Vec::new() })
        .collect();
    let mut hyper_draws = HyperDraws::default();
    for (states, _) in &runs {
        for s in states {
            for i in 0..n {
                compartments[i].ln_a.push(s.theta[i][0]);
                compartments[i].ln_b.push(s.theta[i][1]);
            }
            hyper_draws.mu_ln_a.push(s.mu[0]);
            hyper_draws.mu_ln_b.push(s.mu[1]);
            hyper_draws.sigma_ln_a.push(s.sigma[0]);
            hyper_draws.sigma_ln_b.push(s.sigma[1]);
        }
    }
    for (c, (_, rate)) in runs.iter().enumerate() {
        log::debug!("hierarchical chain {c}: mean compartment acceptance {rate:.3}");
    }
    let mut samples = PosteriorSamples {
        mode: FitMode::Hierarchical,
        chains: cfg.chains,
        draws_per_chain: cfg.kept_draws,
        config: *cfg,
        compartments,
        hyper: Some(hyper_draws),
        chain_info: Vec::new(),
        diagnostics: Diagnostics::default(),
    };
    samples.compute_diagnostics();
    Ok(samples)
}

fn run_chain(
    dataset: &FleetDataset,
    hp: &HyperPriors,
    cfg: &MCMCConfig,
    chain: usize,
    center: [f64; 2],
) -> (Vec<State>, f64) {
    let histories = dataset.compartments();
    let n = histories.len();
    let lane = chain as u64;
    let lik = |i: usize, x: [f64; 2]| match PowerLawParams::from_log(x[0], x[1]) {
        Ok(p) => log_likelihood(&p, &histories[i]),
        Err(_) => f64::NEG_INFINITY,
    };

    let mut init = rng::stream(cfg.seed, lane, u64::MAX, 0);
    let mut jitter = |sd: f64| sd * init.sample::<f64, _>(StandardNormal);
    let bounds = [(hp.l_ln_a, hp.u_ln_a), (hp.l_ln_b, hp.u_ln_b)];
    let mut sigma = [0.0; 2];
    for d in 0..2 {
        let (lo, hi) = bounds[d];
        let mid = if hi > 1.0 && lo < 0.5 { 0.5 } else { 0.5 * (lo + hi) };
        sigma[d] = reflect(mid + jitter(0.1 * (hi - lo)), lo, hi);
    }
    let mu = [center[0] + jitter(0.3), center[1] + jitter(0.1)];
    let theta: Vec<[f64; 2]> = (0..n).map(|_| [mu[0] + jitter(0.3), mu[1] + jitter(0.1)]).collect();
    let lik0: Vec<f64> = (0..n).map(|i| lik(i, theta[i])).collect();
    let mut s = State { theta, lik: lik0, mu, sigma };
    for i in 0..n {
        if !s.lik[i].is_finite() {
            s.theta[i] = center;
            s.lik[i] = lik(i, center);
        }
    }

    let mut proposals: Vec<AdaptiveProposal> =
        (0..n).map(|_| AdaptiveProposal::new([0.25, 0.0, 0.04], cfg.warmup_draws, cfg.target_acceptance)).collect();
    let mut frozen: Vec<[f64; 3]> = Vec::new();
    let mut sig = SigmaStep { log_step: [((bounds[0].1 - bounds[0].0) * 0.1).ln(), ((bounds[1].1 - bounds[1].0) * 0.1).ln()] };
    let mut stretch = AdaptiveProposal::new([0.01, 0.0, 0.01], cfg.warmup_draws, cfg.target_acceptance);
    let mut frozen_stretch = [0.0; 3];
    let mut single = [(0.3f64).ln(); 2];
    let mut shift = AdaptiveProposal::new([0.01, 0.0, 0.0025], cfg.warmup_draws, cfg.target_acceptance);
    let mut frozen_shift = [0.0; 3];
    let mut kept = Vec::with_capacity(cfg.kept_draws);
    let mut accepted = 0usize;

    for iter in 0..cfg.iterations() {
        let warm = iter < cfg.warmup_draws;
        if iter == cfg.warmup_draws {
            frozen = proposals.iter().map(AdaptiveProposal::factor).collect();
            frozen_shift = shift.factor();
            frozen_stretch = stretch.factor();
        }
        let step = iter as u64;

        // Hyperparameters.
        let mut r = rng::stream(cfg.seed, lane, step, 0);
        let means = [(hp.m_ln_a, hp.s_ln_a), (hp.m_ln_b, hp.s_ln_b)];
        for d in 0..2 {
            let (m, sd) = means[d];
            let prec = 1.0 / (sd * sd) + n as f64 / (s.sigma[d] * s.sigma[d]);
            let sum: f64 = s.theta.iter().map(|t| t[d]).sum();
            let mean = (m / (sd * sd) + sum / (s.sigma[d] * s.sigma[d])) / prec;
            s.mu[d] = mean + r.sample::<f64, _>(StandardNormal) / prec.sqrt();
        }
        for d in 0..2 {
            let (lo, hi) = bounds[d];
            let sum_sq: f64 = s.theta.iter().map(|t| (t[d] - s.mu[d]).powi(2)).sum();
            let z: f64 = r.sample(StandardNormal);
            let u: f64 = r.random();
            let proposal = reflect(s.sigma[d] + sig.log_step[d].exp() * z, lo, hi);
            let log_ratio = ln_sigma_conditional(proposal, sum_sq, n as f64) - ln_sigma_conditional(s.sigma[d], sum_sq, n as f64);
            if u.ln() < log_ratio {
                s.sigma[d] = proposal;
            }
            if warm {
                adapt(&mut sig.log_step[d], log_ratio, iter);
                sig.log_step[d] = sig.log_step[d].min((hi - lo).ln() + 1.0);
            }
        }

        // Compartments, each on its own block of the iteration's stream.
        let (mu, sigma) = (s.mu, s.sigma);
        let prior = |x: [f64; 2]| ln_normal(x[0], mu[0], sigma[0]) + ln_normal(x[1], mu[1], sigma[1]);
        for i in 0..n {
            let mut r = rng::stream(cfg.seed, lane, step, 1 + i as u64);
            let factor = if warm { proposals[i].factor() } else { frozen[i] };
            let target = |x: [f64; 2]| lik(i, x) + prior(x);
            let x = s.theta[i];
            let (y, _, prob) = rwm_step(&mut r, factor, 0.0, x, s.lik[i] + prior(x), &target);
            if y != x {
                s.theta[i] = y;
                s.lik[i] = lik(i, y);
                if !warm {
                    accepted += 1;
                }
            }
            proposals[i].adapt(iter, s.theta[i], prob);
        }

        // Joint moves along the population funnel: shift both means with
        // every θ, and stretch both σ with every deviation θ − μ.
        let mut r = rng::stream(cfg.seed, lane, step, 1 + n as u64);
        let factor = if warm { shift.factor() } else { frozen_shift };
        let prob = shift_move(&mut s, &mut r, factor, means, &lik);
        shift.adapt(iter, s.mu, prob);
        let factor = if warm { stretch.factor() } else { frozen_stretch };
        let prob = stretch_move(&mut s, &mut r, factor, bounds, &lik);
        stretch.adapt(iter, [s.sigma[0].ln(), s.sigma[1].ln()], prob);
        for d in 0..2 {
            let mut f = [0.0; 3];
            f[if d == 0 { 0 } else { 2 }] = single[d].exp();
            let prob = stretch_move(&mut s, &mut r, f, bounds, &lik);
            if warm {
                adapt(&mut single[d], prob.max(1e-300).ln(), iter);
            }
        }

        if !warm && (iter - cfg.warmup_draws) % cfg.thin == 0 {
            kept.push(s.clone());
        }
    }
    let rate = accepted as f64 / ((cfg.kept_draws * cfg.thin * n) as f64);
    (kept, rate)
}

/// Move both population means and every compartment by one common offset.
/// The population densities are unchanged, leaving the likelihood and the
/// hyperprior on the means.
fn shift_move<R: Rng, L: Fn(usize, [f64; 2]) -> f64>(
    s: &mut State,
    r: &mut R,
    factor: [f64; 3],
    means: [(f64, f64); 2],
    lik: &L,
) -> f64 {
    let n = s.theta.len();
    let mu0 = s.mu;
    let hyper = |m: [f64; 2]| ln_normal(m[0], means[0].0, means[0].1) + ln_normal(m[1], means[1].0, means[1].1);
    let moved = |m: [f64; 2]| -> Vec<[f64; 2]> { s.theta.iter().map(|t| [t[0] + m[0] - mu0[0], t[1] + m[1] - mu0[1]]).collect() };
    let target = |m: [f64; 2]| {
        let th = moved(m);
        (0..n).map(|i| lik(i, th[i])).sum::<f64>() + hyper(m)
    };
    let total: f64 = s.lik.iter().sum();
    let (m, _, prob) = rwm_step(r, factor, 0.0, mu0, total + hyper(mu0), &target);
    if m != mu0 {
        s.theta = moved(m);
        s.lik = (0..n).map(|i| lik(i, s.theta[i])).collect();
        s.mu = m;
    }
    prob
}

/// Random walk on `ln σ` that stretches every deviation from the mean by the
/// same factor. The change in population density cancels the Jacobian of the
/// stretch, leaving the likelihood ratio plus the `ln σ` change from the
/// Uniform hyperprior.
fn stretch_move<R: Rng, L: Fn(usize, [f64; 2]) -> f64>(
    s: &mut State,
    r: &mut R,
    factor: [f64; 3],
    bounds: [(f64, f64); 2],
    lik: &L,
) -> f64 {
    let n = s.theta.len();
    let x0 = [s.sigma[0].ln(), s.sigma[1].ln()];
    let stretched = |x: [f64; 2]| -> Vec<[f64; 2]> {
        let f = [(x[0] - x0[0]).exp(), (x[1] - x0[1]).exp()];
        s.theta.iter().map(|t| [s.mu[0] + (t[0] - s.mu[0]) * f[0], s.mu[1] + (t[1] - s.mu[1]) * f[1]]).collect()
    };
    let target = |x: [f64; 2]| {
        if !(0..2).all(|d| (bounds[d].0..=bounds[d].1).contains(&x[d].exp())) {
            return f64::NEG_INFINITY;
        }
        let th = stretched(x);
        (0..n).map(|i| lik(i, th[i])).sum::<f64>() + x[0] + x[1]
    };
    let total: f64 = s.lik.iter().sum();
    let (x, _, prob) = rwm_step(r, factor, 0.0, x0, total + x0[0] + x0[1], &target);
    if x != x0 {
        s.theta = stretched(x);
        s.lik = (0..n).map(|i| lik(i, s.theta[i])).collect();
        s.sigma = [x[0].exp(), x[1].exp()];
    }
    prob
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_stays_inside() {
        for &x in &[-7.3, -0.1, 0.0, 0.4, 1.0, 1.7, 5.2, 13.9] {
            let y = reflect(x, 0.0, 1.0);
            assert!((0.0..=1.0).contains(&y), "{x} -> {y}");
        }
        assert!((reflect(1.2, 0.0, 1.0) - 0.8).abs() < 1e-12);
        assert!((reflect(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
        assert!((reflect(2.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
    }
}
