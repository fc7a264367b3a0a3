use serde::{Deserialize, Serialize};

use crate::gibbs::RetainedDraw;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Each chain cut into two halves of equal length (a middle draw of an
/// odd-length chain is dropped).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains.iter().flat_map(|c| [c[..n].to_vec(), c[c.len() - n..].to_vec()]).collect()
}

/// Within-chain variance, pooled variance estimate, and chain count/length.
fn variance_parts(chains: &[Vec<f64>]) -> Option<(f64, f64)> {
    let m = chains.len();
    let n = chains.first()?.len();
    if m < 2 || n < 2 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / m as f64;
    let b = n as f64 * var(&means);
    let plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((w, plus))
}

/// Split-chain potential scale reduction. `None` when the within-chain
/// variance is zero or there are too few draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let (w, plus) = variance_parts(&split(chains))?;
    if !(w > 0.0) {
        return None;
    }
    Some((plus / w).sqrt())
}

fn autocovariance(c: &[f64], lag: usize) -> f64 {
    let m = mean(c);
    let n = c.len();
    (0..n - lag).map(|t| (c[t] - m) * (c[t + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size over split chains, with autocorrelations summed
/// in pairs until a pair turns negative.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    let (w, plus) = variance_parts(&parts)?;
    if !(w > 0.0) {
        return None;
    }
    let m = parts.len();
    let n = parts[0].len();
    let rho = |lag: usize| -> f64 {
        let acov = parts.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / plus
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    Some(total / tau.max(1.0 / total.log10().max(1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub thin: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Named scalar traces (fixed effects, noise variances, allocation and
/// presence fixed effects) of one chain.
pub fn scalar_traces(draws: &[RetainedDraw]) -> Vec<(String, Vec<f64>)> {
    let Some(first) = draws.first() else { return Vec::new() };
    let mut out = Vec::new();
    for j in 0..first.fixed_effects.len() {
        out.push((format!("fixed_effects[{j}]"), draws.iter().map(|d| d.fixed_effects[j]).collect()));
    }
    for l in 0..first.noise_var.len() {
        out.push((format!("noise_var[{l}]"), draws.iter().map(|d| d.noise_var[l]).collect()));
    }
    for l in 1..first.alloc.coef.nrows() {
        for j in 0..first.alloc.coef.ncols() {
            out.push((format!("allocation_coef[{l},{j}]"), draws.iter().map(|d| d.alloc.coef[(l, j)]).collect()));
        }
    }
    if let Some(p) = &first.presence {
        for j in 0..p.fixed_effects.len() {
            out.push((format!("presence_fixed_effects[{j}]"), draws.iter().map(|d| d.presence.as_ref().expect("joint draw").fixed_effects[j]).collect()));
        }
    }
    out
}

/// Summaries for the scalar fixed effects, noise variances and allocation
/// coefficients. Pass draws already relabeled; one slice per chain.
pub fn convergence_report(chains: &[Vec<RetainedDraw>], thin: usize) -> ConvergenceReport {
    let per_chain: Vec<Vec<(String, Vec<f64>)>> = chains.iter().map(|c| scalar_traces(c)).collect();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let mut rows = Vec::new();
    if let Some(first) = per_chain.first() {
        for (k, (name, _)) in first.iter().enumerate() {
            let traces: Vec<Vec<f64>> = per_chain.iter().map(|c| c[k].1[..n].to_vec()).collect();
            let all: Vec<f64> = traces.concat();
            rows.push(ConvergenceRow {
                parameter: name.clone(),
                mean: if all.is_empty() { f64::NAN } else { mean(&all) },
                sd: if all.len() < 2 { f64::NAN } else { var(&all).sqrt() },
                rhat: split_rhat(&traces),
                ess: effective_sample_size(&traces),
            });
        }
    }
    ConvergenceReport { chains: chains.len(), draws_per_chain: n, thin, rows }
}
