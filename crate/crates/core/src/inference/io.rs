use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::diagnostics::Diagnostics;
use super::mcmc::{CompartmentDraws, FitMode, HyperDraws, MCMCConfig, PosteriorSamples};
use super::predict::quantile;
use super::InferenceError;

const BASE_COLUMNS: [&str; 5] = ["compartment_id", "chain", "draw", "ln_a", "ln_b"];
const HYPER_COLUMNS: [&str; 4] = ["mu_ln_a", "sigma_ln_a", "mu_ln_b", "sigma_ln_b"];

/// Write draws as CSV, one row per (compartment, chain, draw), preceded by
/// `#` comment lines.
pub fn write_samples_csv<W: Write>(samples: &PosteriorSamples, mut out: W, comments: &[String]) -> Result<(), InferenceError> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if samples.hyper.is_some() {
        header.extend(HYPER_COLUMNS);
    }
    w.write_record(&header)?;
    let n = samples.draws_per_chain;
    for c in &samples.compartments {
        for (i, (a, b)) in c.ln_a.iter().zip(&c.ln_b).enumerate() {
            let mut row = vec![c.key.clone(), (i / n).to_string(), (i % n).to_string(), a.to_string(), b.to_string()];
            if let Some(h) = &samples.hyper {
                row.extend([h.mu_ln_a[i], h.sigma_ln_a[i], h.mu_ln_b[i], h.sigma_ln_b[i]].map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read draws written by [`write_samples_csv`]; diagnostics are recomputed.
pub fn read_samples_csv<R: Read>(input: R) -> Result<PosteriorSamples, InferenceError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let hier = cols.len() == 9 && cols[5..] == HYPER_COLUMNS;
    if cols[..5.min(cols.len())] != BASE_COLUMNS || !(cols.len() == 5 || hier) {
        return Err(InferenceError::Format(format!("unexpected samples header `{}`", cols.join(","))));
    }

    let mut compartments: Vec<CompartmentDraws> = Vec::new();
    let mut hyper = HyperDraws::default();
    let mut max_chain = 0usize;
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64, InferenceError> {
            row[j].parse().map_err(|_| InferenceError::Format(format!("row {line}: bad number `{}`", &row[j])))
        };
        let chain: usize = row[1].parse().map_err(|_| InferenceError::Format(format!("row {line}: bad chain")))?;
        max_chain = max_chain.max(chain);
        let key = &row[0];
        let first_of_key = compartments.last().is_none_or(|c| c.key != key);
        if first_of_key {
            compartments.push(CompartmentDraws { key: key.to_string(), ln_a: vec![], ln_b: vec![], log_posterior: vec![] });
        }
        let c = compartments.last_mut().expect("pushed above");
        c.ln_a.push(num(3)?);
        c.ln_b.push(num(4)?);
        if hier && compartments.len() == 1 {
            hyper.mu_ln_a.push(num(5)?);
            hyper.sigma_ln_a.push(num(6)?);
            hyper.mu_ln_b.push(num(7)?);
            hyper.sigma_ln_b.push(num(8)?);
        }
    }
    let chains = max_chain + 1;
    let total = compartments.first().map_or(0, |c| c.len());
    if compartments.iter().any(|c| c.len() != total) || total % chains != 0 {
        return Err(InferenceError::Format("draw counts differ between compartments or chains".into()));
    }
    let mode = if hier {
        FitMode::Hierarchical
    } else if compartments.len() == 1 && compartments[0].key == "pooled" {
        FitMode::Pooled
    } else {
        FitMode::Individual
    };
    let draws_per_chain = total / chains;
    let mut samples = PosteriorSamples {
        mode,
        chains,
        draws_per_chain,
        config: MCMCConfig { chains, kept_draws: draws_per_chain.max(1), ..MCMCConfig::default() },
        compartments,
        hyper: hier.then_some(hyper),
        chain_info: Vec::new(),
        diagnostics: Diagnostics::default(),
    };
    if total > 0 {
        samples.compute_diagnostics();
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

pub fn summarize(name: &str, values: &[f64]) -> ParamSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: quantile(&sorted, 0.025),
        q500: quantile(&sorted, 0.5),
        q975: quantile(&sorted, 0.975),
    }
}

/// Marginal summaries of every sampled parameter.
pub fn posterior_summary(samples: &PosteriorSamples) -> Vec<ParamSummary> {
    let mut out = Vec::new();
    for c in &samples.compartments {
        out.push(summarize(&format!("{}:ln_a", c.key), &c.ln_a));
        out.push(summarize(&format!("{}:ln_b", c.key), &c.ln_b));
    }
    if let Some(h) = &samples.hyper {
        out.push(summarize("mu_ln_a", &h.mu_ln_a));
        out.push(summarize("sigma_ln_a", &h.sigma_ln_a));
        out.push(summarize("mu_ln_b", &h.mu_ln_b));
        out.push(summarize("sigma_ln_b", &h.sigma_ln_b));
    }
    out
}
