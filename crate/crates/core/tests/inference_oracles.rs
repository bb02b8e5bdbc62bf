mod oracle;

use coatplan::fleet::{CompartmentHistory, FleetDataset};
use coatplan::inference::*;
use coatplan::nhpp::{PowerLawParams, TimeInterval};
use coatplan::simulator::{synthesize_fleet, InspectionRegime, ParamPopulation, SynthConfig};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Continuous, Discrete, Normal, Poisson};

fn p(a: f64, b: f64) -> PowerLawParams {
    PowerLawParams::new(a, b).unwrap()
}

// Σ ln Poisson(N_k; a·(t_k^b − t_{k−1}^b)) straight from statrs.
fn ll_oracle(a: f64, b: f64, h: &CompartmentHistory) -> f64 {
    h.intervals()
        .map(|(t0, t1, n)| {
            let mean = a * (t1.powf(b) - t0.powf(b));
            Poisson::new(mean).unwrap().ln_pmf(n)
        })
        .sum()
}

fn history_strategy() -> impl Strategy<Value = CompartmentHistory> {
    prop::collection::vec((0.5f64..30.0, 0u64..25), 1..12).prop_map(|rows| {
        let mut t = 0.0;
        let inspections = rows
            .into_iter()
            .map(|(gap, n)| {
                t += gap;
                (t, n)
            })
            .collect();
        CompartmentHistory::new("S", "C", inspections).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn likelihood_composes_count_probabilities(h in history_strategy(), la in -6.0f64..1.0, b in 0.4f64..2.5) {
        let a = la.exp();
        let got = log_likelihood(&p(a, b), &h);
        let want = ll_oracle(a, b, &h);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn pooled_likelihood_sums_compartments(hs in prop::collection::vec(history_strategy(), 1..6), la in -6.0f64..1.0, b in 0.4f64..2.5) {
        let hs: Vec<CompartmentHistory> = hs
            .into_iter()
            .enumerate()
            .map(|(i, h)| CompartmentHistory::new("S", format!("C{i}"), h.inspections().to_vec()).unwrap())
            .collect();
        let ds = FleetDataset::new(hs.clone()).unwrap();
        let params = p(la.exp(), b);
        let sum: f64 = hs.iter().map(|h| log_likelihood(&params, h)).sum();
        let pooled = pooled_log_likelihood(&params, &ds);
        prop_assert!((pooled - sum).abs() <= 1e-12 * sum.abs().max(1.0));
    }

    #[test]
    fn empty_interval_split_keeps_likelihood(h in history_strategy(), la in -6.0f64..1.0, b in 0.4f64..2.5, frac in 0.05f64..0.95) {
        // Splitting a zero-count interval into two zero-count halves.
        let rows = h.inspections().to_vec();
        let Some(i) = rows.iter().position(|&(_, n)| n == 0) else { return Ok(()); };
        let start = if i == 0 { 0.0 } else { rows[i - 1].0 };
        let mut split = rows.clone();
        split.insert(i, (start + frac * (rows[i].0 - start), 0));
        let params = p(la.exp(), b);
        let before = log_likelihood(&params, &h);
        let after = log_likelihood(&params, &CompartmentHistory::new("S", "C", split).unwrap());
        prop_assert!((before - after).abs() <= 1e-12 * before.abs().max(1.0));
    }

    #[test]
    fn flat_priors_shift_the_likelihood_by_a_constant(h in history_strategy(), x in prop::collection::vec((-6.0f64..1.0, -0.8f64..0.9), 2)) {
        let priors = Priors { mean_ln_a: 0.0, sd_ln_a: 1e6, mean_ln_b: 0.0, sd_ln_b: 1e6 };
        let offset = |(la, lb): (f64, f64)| {
            log_posterior(LogParams { ln_a: la, ln_b: lb }, &h, &priors) - log_likelihood(&p(la.exp(), lb.exp()), &h)
        };
        prop_assert!((offset(x[0]) - offset(x[1])).abs() < 1e-9);
    }
}

#[test]
fn likelihood_spot_values() {
    let h = CompartmentHistory::new("S", "C", vec![(10.0, 3)]).unwrap();
    assert!((log_likelihood(&p(0.5, 1.0), &h) - (-5.0 + 3.0 * 5f64.ln() - 6f64.ln())).abs() < 1e-12);
    let h = CompartmentHistory::new("S", "C", vec![(10.0, 0)]).unwrap();
    assert!((log_likelihood(&p(0.5, 1.0), &h) + 5.0).abs() < 1e-12);
}

#[test]
fn posterior_spot_values() {
    let h = CompartmentHistory::new("S", "C", vec![(6.0, 2), (18.0, 5), (30.0, 1)]).unwrap();
    let priors = Priors::default();
    let na = Normal::new(priors.mean_ln_a, priors.sd_ln_a).unwrap();
    let nb = Normal::new(priors.mean_ln_b, priors.sd_ln_b).unwrap();
    for (la, lb) in [(-3.0, 0.2), (-1.2, -0.4), (-5.5, 0.7)] {
        let want = ll_oracle(f64::exp(la), f64::exp(lb), &h) + na.ln_pdf(la) + nb.ln_pdf(lb);
        let got = log_posterior(LogParams { ln_a: la, ln_b: lb }, &h, &priors);
        assert!((got - want).abs() < 1e-12 * want.abs(), "{got} vs {want}");
    }
    let empty = CompartmentHistory::new("S", "C", vec![]).unwrap();
    let lp = LogParams { ln_a: -2.0, ln_b: 0.1 };
    assert!((log_posterior(lp, &empty, &priors) - na.ln_pdf(-2.0) - nb.ln_pdf(0.1)).abs() < 1e-12);
}

#[test]
fn homogeneous_pooled_mle_is_the_rate() {
    let mut r = oracle::rng(3);
    let hs: Vec<CompartmentHistory> = (0..6)
        .map(|i| {
            let mut t = 0.0;
            let rows = (0..r.random_range(1..6))
                .map(|_| {
                    t += r.random_range(3.0..20.0);
                    (t, r.random_range(0..9))
                })
                .collect();
            CompartmentHistory::new("S", format!("C{i}"), rows).unwrap()
        })
        .collect();
    let ds = FleetDataset::new(hs).unwrap();
    let defects: u64 = ds.compartments().iter().map(|c| c.total_defects()).sum();
    let exposure: f64 = ds.compartments().iter().map(|c| c.last_time()).sum();
    let opts = MleOptions { fixed_ln_b: Some(0.0), ..MleOptions::default() };
    let fit = fit_mle_pooled(&ds, LogParams { ln_a: 0.0, ln_b: 0.0 }, &opts).unwrap();
    let want = defects as f64 / exposure;
    assert!((fit.params.a() - want).abs() < 1e-8 * want, "{} vs {want}", fit.params.a());
}

#[test]
fn single_interval_rate() {
    let h = CompartmentHistory::new("S", "C", vec![(3.0, 6)]).unwrap();
    let opts = MleOptions { fixed_ln_b: Some(0.0), ..MleOptions::default() };
    let fit = fit_mle(&h, LogParams { ln_a: -1.0, ln_b: 0.0 }, &opts).unwrap();
    assert!((fit.params.a() - 2.0).abs() < 1e-8);
    let joint = fit_mle(&h, LogParams { ln_a: -1.0, ln_b: 0.0 }, &MleOptions::default()).unwrap();
    assert!(joint.degenerate);
}

#[test]
fn pooled_mle_matches_grid_search() {
    let cfg = SynthConfig {
        ships: 5,
        compartments_per_ship: 10,
        population: ParamPopulation { mean_ln_a: 0.002f64.ln(), sd_ln_a: 0.0, mean_ln_b: 1.5f64.ln(), sd_ln_b: 0.0 },
        regime: InspectionRegime::Every(12.0),
        observed_until: 120.0,
    };
    let ds = synthesize_fleet(&cfg, 9).unwrap().dataset;
    assert!(ds.compartments().iter().all(|c| c.inspections().len() == 10));
    let fit = fit_mle_pooled(&ds, LogParams { ln_a: -5.0, ln_b: 0.0 }, &MleOptions::default()).unwrap();

    let (mut best, mut arg) = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in 0..=400 {
        let la = -8.0 + 0.01 * i as f64;
        for j in 0..=200 {
            let lb = -1.0 + 0.01 * j as f64;
            let v = pooled_log_likelihood(&p(la.exp(), lb.exp()), &ds);
            if v > best {
                best = v;
                arg = (la, lb);
            }
        }
    }
    assert!(fit.log_likelihood >= best - 1e-9, "{} < {best}", fit.log_likelihood);
    assert!((fit.log_params.ln_a - arg.0).abs() <= 0.01 + 1e-9, "{:?} vs {arg:?}", fit.log_params);
    assert!((fit.log_params.ln_b - arg.1).abs() <= 0.01 + 1e-9, "{:?} vs {arg:?}", fit.log_params);
}

#[test]
fn degenerate_draws_give_zero_width_bands() {
    let draws = CompartmentDraws { key: "S/C".into(), ln_a: vec![-2.0; 50], ln_b: vec![0.3; 50], log_posterior: vec![] };
    let w = TimeInterval::new(12.0, 72.0).unwrap();
    let s = predictive_counts(&draws, &w, &[0.05, 0.5, 0.95], 1).unwrap();
    let lam = p((-2.0f64).exp(), 0.3f64.exp()).cumulative_from_launch(72.0) - p((-2.0f64).exp(), 0.3f64.exp()).cumulative_from_launch(12.0);
    assert!(s.lambda.iter().all(|&q| (q - lam).abs() < 1e-9 * lam));
    let curve = predictive_curve(&draws, 12.0, &[24.0, 72.0], &[0.05, 0.95]).unwrap();
    assert!((curve[1].quantiles[0] - curve[1].quantiles[1]).abs() < 1e-12);
}
