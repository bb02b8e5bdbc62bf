use std::fs::File;

use coatplan::fleet::{split_by_time, FleetDataset};
use coatplan::inference::*;
use coatplan::nhpp::TimeInterval;
use serde::Serialize;

use crate::config::{FitKind, RunConfig};
use crate::error::{Failure, ResultExt};
use crate::output::{num, Outputs};

pub fn load_dataset(cfg: &RunConfig) -> Result<FleetDataset, Failure> {
    let path = cfg.data.path.as_ref().ok_or_else(|| Failure::config("no inspection data given (--data)"))?;
    FleetDataset::from_path(path).data_err(|| format!("reading {}", path.display()))
}

fn inference_failure(e: InferenceError) -> Failure {
    match e {
        InferenceError::EmptyData | InferenceError::UnknownCompartment(_) | InferenceError::Format(_) => Failure::data(e),
        _ => Failure::config(e),
    }
}

#[derive(Serialize)]
struct CompartmentMle<'a> {
    ship_id: &'a str,
    compartment_id: &'a str,
    a: f64,
    b: f64,
    fit: MleFit,
}

#[derive(Serialize)]
struct MleReport<'a> {
    mode: FitKind,
    pooled: MleFit,
    compartments: Vec<CompartmentMle<'a>>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    mode: FitKind,
    converged: bool,
    diagnostics: &'a Diagnostics,
    chain_info: &'a [ChainInfo],
    summary: Vec<ParamSummary>,
}

pub fn fit(cfg: &RunConfig, out: &mut Outputs, allow_warnings: bool) -> Result<(), Failure> {
    cfg.require_seed("fit")?;
    let mut data = load_dataset(cfg)?;
    if let Some(c) = cfg.data.cutoff {
        data = split_by_time(&data, c).0;
    }
    if data.is_empty() && cfg.model.mode != FitKind::Bayes {
        return Err(Failure::data("no inspection records to fit"));
    }
    let samples = match cfg.model.mode {
        FitKind::Mle => return fit_mle_all(cfg, out, &data),
        FitKind::Bayes if data.is_empty() => {
            // Nothing observed: the posterior is the prior.
            let empty = coatplan::fleet::CompartmentHistory::new("prior", "prior", vec![]).data_err(|| "empty history")?;
            fit_bayes_individual(&empty, &cfg.model.priors, &cfg.model.mcmc).map_err(inference_failure)?
        }
        FitKind::Bayes => fit_bayes_individual_all(&data, &cfg.model.priors, &cfg.model.mcmc).map_err(inference_failure)?,
        FitKind::Hier => {
            let hyper = if cfg.model.hyperpriors_from_pooled {
                let pooled = fit_bayes_pooled(&data, &Priors::flat(), &cfg.model.mcmc).map_err(inference_failure)?;
                hyperpriors_from_pooled(&pooled, &cfg.model.hyperpriors)
            } else {
                cfg.model.hyperpriors
            };
            fit_bayes_hierarchical(&data, &hyper, &cfg.model.mcmc).map_err(inference_failure)?
        }
    };

    let lines = out.audit.comment_lines();
    let mut w = out.create("samples.csv")?;
    write_samples_csv(&samples, &mut w, &lines).config_err(|| "writing samples.csv")?;
    drop(w);
    let converged = samples.diagnostics.converged();
    out.json(
        "diagnostics.json",
        &FitReport {
            mode: cfg.model.mode,
            converged,
            diagnostics: &samples.diagnostics,
            chain_info: &samples.chain_info,
            summary: posterior_summary(&samples),
        },
    )?;
    if !converged && !allow_warnings {
        return Err(Failure::convergence(format!(
            "MCMC diagnostics failed ({}); rerun with more draws or pass --allow-warnings",
            samples.diagnostics.warnings.join("; ")
        )));
    }
    Ok(())
}

fn fit_mle_all(cfg: &RunConfig, out: &mut Outputs, data: &FleetDataset) -> Result<(), Failure> {
    let opts = &cfg.model.mle;
    let defects: u64 = data.compartments().iter().map(|c| c.total_defects()).sum();
    let exposure: f64 = data.compartments().iter().map(|c| c.last_time() - c.origin()).sum();
    let start = LogParams { ln_a: ((defects as f64 + 0.5) / exposure.max(1e-9)).ln(), ln_b: 0.0 };
    let pooled = fit_mle_pooled(data, start, opts).map_err(inference_failure)?;
    let mut compartments = Vec::new();
    for h in data.compartments() {
        let fit = fit_mle(h, pooled.log_params, opts).map_err(inference_failure)?;
        compartments.push(CompartmentMle {
            ship_id: h.ship_id(),
            compartment_id: h.compartment_id(),
            a: fit.params.a(),
            b: fit.params.b(),
            fit,
        });
    }
    out.table(
        "params.csv",
        &["ship_id", "compartment_id", "a", "b"],
        compartments.iter().map(|c| vec![c.ship_id.to_string(), c.compartment_id.to_string(), num(c.a), num(c.b)]),
    )?;
    let degenerate = compartments.iter().filter(|c| c.fit.degenerate).count();
    if degenerate > 0 {
        log::warn!("{degenerate} compartment fits are degenerate (too few intervals to identify both parameters)");
    }
    out.json("mle.json", &MleReport { mode: FitKind::Mle, pooled, compartments })
}

pub fn load_samples(cfg: &RunConfig) -> Result<PosteriorSamples, Failure> {
    let path = cfg.data.samples.clone().unwrap_or_else(|| cfg.data.out.join("samples.csv"));
    let file = File::open(&path).data_err(|| format!("posterior samples {} not found; run `fit` first", path.display()))?;
    read_samples_csv(file).data_err(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct Coverage {
    key: String,
    from: f64,
    to: f64,
    observed: u64,
    expected: f64,
    lower: f64,
    upper: f64,
    covered: bool,
}

#[derive(Serialize)]
struct Validation {
    cutoff: f64,
    band: [f64; 2],
    covered: usize,
    total: usize,
    coverage: f64,
    compartments: Vec<Coverage>,
}

pub fn predict(
    cfg: &RunConfig,
    out: &mut Outputs,
    from: Option<f64>,
    new_ship: Option<&str>,
    sisters: &[String],
) -> Result<(), Failure> {
    let seed = cfg.require_seed("predict")?;
    let samples = load_samples(cfg)?;
    let q = &cfg.model.quantiles;
    if q.is_empty() || q.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Failure::config("quantiles must lie in [0, 1]"));
    }
    let (window, step) = (cfg.model.prediction_window, cfg.model.prediction_step);
    if !(window > 0.0 && step > 0.0) {
        return Err(Failure::config("prediction window and step must be positive"));
    }
    let data = match &cfg.data.path {
        Some(_) => Some(load_dataset(cfg)?),
        None => None,
    };
    let train = match (&data, cfg.data.cutoff) {
        (Some(d), Some(c)) => Some(split_by_time(d, c).0),
        (Some(d), None) => Some(d.clone()),
        _ => None,
    };

    // (output key, draws, curve start)
    let mut curves: Vec<(String, CompartmentDraws, f64)> = Vec::new();
    if let Some(ship) = new_ship {
        let start = from.unwrap_or(0.0);
        let mut ids: Vec<&str> = Vec::new();
        for c in &samples.compartments {
            if let Some((s, id)) = c.key.split_once('/') {
                if sisters.iter().any(|x| x == s) && !ids.contains(&id) {
                    ids.push(id);
                }
            }
        }
        if ids.is_empty() {
            return Err(Failure::data(format!("no posterior draws for sister ships {}", sisters.join(","))));
        }
        for id in ids {
            let parts: Vec<&CompartmentDraws> =
                sisters.iter().filter_map(|s| samples.compartment(&format!("{s}/{id}"))).collect();
            let key = format!("{ship}/{id}");
            curves.push((key.clone(), CompartmentDraws::concat(&key, parts), start));
        }
    } else {
        for c in &samples.compartments {
            let start = match (from, &train) {
                (Some(t), _) => t,
                (None, Some(d)) => d.get(&c.key).map_or(cfg.horizon.t_now, |h| h.last_time()),
                (None, None) => cfg.horizon.t_now,
            };
            curves.push((c.key.clone(), c.clone(), start));
        }
    }

    let steps = (window / step).round().max(1.0) as usize;
    let mut rows = Vec::new();
    for (key, draws, start) in &curves {
        let times: Vec<f64> = (1..=steps).map(|i| start + (i as f64 * step).min(window)).collect();
        let points = predictive_curve(draws, *start, &times, q).map_err(inference_failure)?;
        for p in points {
            let mut row = vec![key.clone(), num(*start), num(p.time), num(p.time - start), num(p.mean)];
            row.extend(p.quantiles.iter().map(|&v| num(v)));
            rows.push(row);
        }
    }
    let qnames: Vec<String> = q.iter().map(|x| format!("q{x}")).collect();
    let mut header = vec!["key", "start_months", "time_months", "months_ahead", "mean"];
    header.extend(qnames.iter().map(String::as_str));
    out.table("curves.csv", &header, rows)?;

    if let (Some(cut), Some(d)) = (cfg.data.cutoff, &data) {
        let (_, test) = split_by_time(d, cut);
        let band = [q[0], q[q.len() - 1]];
        let mut comps = Vec::new();
        for (i, h) in test.compartments().iter().enumerate() {
            let draws = match samples.mode {
                FitMode::Pooled => samples.compartments.first(),
                _ => samples.compartment(&h.key()),
            };
            let Some(draws) = draws else { continue };
            if h.is_empty() {
                continue;
            }
            let iv = TimeInterval::new(h.origin(), h.last_time()).data_err(|| format!("test window of {}", h.key()))?;
            let s = predictive_counts(draws, &iv, &band, seed.wrapping_add((i as u64) << 32)).map_err(inference_failure)?;
            let observed = h.total_defects();
            let (lower, upper) = (s.counts[0], s.counts[1]);
            comps.push(Coverage {
                key: h.key(),
                from: h.origin(),
                to: h.last_time(),
                observed,
                expected: s.lambda_mean,
                lower,
                upper,
                covered: lower <= observed as f64 && observed as f64 <= upper,
            });
        }
        let covered = comps.iter().filter(|c| c.covered).count();
        let total = comps.len();
        out.json(
            "validation.json",
            &Validation {
                cutoff: cut,
                band,
                covered,
                total,
                coverage: if total > 0 { covered as f64 / total as f64 } else { f64::NAN },
                compartments: comps,
            },
        )?;
    }
    Ok(())
}
