use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const RHAT_LIMIT: f64 = 1.05;
pub const ESS_FLOOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    /// `None` when the draws have no within-chain variance.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: BTreeMap<String, ParamDiagnostics>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.warnings.is_empty()
    }

    /// Add a parameter's chains (each of equal length) and record a warning
    /// when it misses the R-hat or ESS targets.
    pub fn add(&mut self, name: &str, chains: &[&[f64]]) {
        let d = param_diagnostics(chains);
        if d.degenerate {
            self.warnings.push(format!("{name}: draws are constant"));
        } else {
            if let Some(r) = d.rhat.filter(|&r| r > RHAT_LIMIT) {
                self.warnings.push(format!("{name}: R-hat {r:.3} > {RHAT_LIMIT}"));
            }
            if let Some(e) = d.ess.filter(|&e| e < ESS_FLOOR) {
                self.warnings.push(format!("{name}: effective sample size {e:.0} < {ESS_FLOOR}"));
            }
        }
        self.params.insert(name.to_string(), d);
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split-chain R-hat and a multi-chain effective sample size (Geyer's
/// initial monotone sequence on the combined autocorrelation).
pub fn param_diagnostics(chains: &[&[f64]]) -> ParamDiagnostics {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    if chains.is_empty() || half < 2 {
        return ParamDiagnostics { rhat: None, ess: None, degenerate: true };
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let m = halves.len() as f64;
    let nh = half as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves.iter().map(|c| variance(c)).collect();
    let w = mean(&vars);
    let grand = mean(&means);
    let b = nh * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    if !(w > 0.0) {
        return ParamDiagnostics { rhat: None, ess: None, degenerate: true };
    }
    let rhat = (var_plus / w).sqrt();

    // Combined autocorrelation over the split chains, one lag at a time.
    let centered: Vec<Vec<f64>> = halves.iter().zip(&means).map(|(c, mu)| c.iter().map(|x| x - mu).collect()).collect();
    let rho = |lag: usize| -> f64 {
        let mean_acov = centered
            .iter()
            .map(|c| c[..half - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / nh)
            .sum::<f64>()
            / m;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < half {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = m * nh;
    let ess = (total / tau.max(1e-12)).min(total * total.log10());
    ParamDiagnostics { rhat: Some(rhat), ess: Some(ess), degenerate: false }
}
