use serde::{Deserialize, Serialize};

use super::labels::{modal_allocation, posterior_means, relabeled_draws};
use crate::error::{Error, Result};
use crate::gibbs::{LikelihoodParams, PatientLikelihood, PosteriorArchive};
use crate::model::{CovFactor, Mode, ModelData, ModelDims};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub classes: usize,
    pub mode: Mode,
    /// Log-likelihood at the posterior means, conditional on the modal classes.
    pub loglik: f64,
    pub parameters: usize,
    pub sample_size: usize,
    pub sample_size_rule: String,
    pub bic: f64,
}

pub fn bic_value(loglik: f64, parameters: usize, sample_size: f64) -> f64 {
    -2.0 * loglik + parameters as f64 * sample_size.ln()
}

fn tri(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Free parameters with the random effects integrated out.
pub fn free_parameters(dims: &ModelDims) -> usize {
    let l = dims.classes;
    let mut k = (l - 1) * dims.allocation + dims.fixed + (l - 1) * dims.profile + l + tri(dims.random);
    if let Some((pf, pp, pr)) = dims.presence {
        k += pf + (l - 1) * pp + tri(pr);
    }
    k
}

pub fn bic(archive: &PosteriorArchive, data: &ModelData) -> Result<BicReport> {
    if archive.is_empty() {
        return Err(Error::argument("archive has no retained draws"));
    }
    let draws = relabeled_draws(archive, data);
    let means = posterior_means(&draws).expect("nonempty");
    let modal = modal_allocation(&draws, data.dims.classes);
    let params = LikelihoodParams { alloc: &means.alloc, outcome: &means.outcome, presence: means.presence.as_ref() };
    let cov = CovFactor::new(&means.outcome.random_cov)?;
    let lik = PatientLikelihood::default();
    let mut loglik = 0.0;
    for (i, &c) in modal.iter().enumerate() {
        loglik += lik.class_terms(data, &params, &cov, i)?[c];
    }
    let (n, rule) = match data.mode {
        Mode::Marginal => (data.n_observed(), "observed outcome cells"),
        Mode::Joint => (data.n_rows(), "patient-quarters"),
    };
    let k = free_parameters(&data.dims);
    Ok(BicReport { classes: data.dims.classes, mode: data.mode, loglik, parameters: k, sample_size: n, sample_size_rule: rule.into(), bic: bic_value(loglik, k, n as f64) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpmlReport {
    pub lpml: f64,
    /// Log CPO per patient; negative infinity for excluded patients.
    pub log_cpo: Vec<f64>,
    /// Patients whose log-likelihood range across draws exceeds the
    /// stability threshold.
    pub unstable: Vec<usize>,
    /// Patients with a zero likelihood at some draw, left out of the sum.
    pub excluded: Vec<usize>,
}

/// Range of log-likelihood beyond which the harmonic mean is flagged.
pub const CPO_RANGE_LIMIT: f64 = 30.0;

/// LPML from a draws-by-patients table of log-likelihoods.
pub fn lpml(loglik: &[Vec<f64>]) -> Result<LpmlReport> {
    let t = loglik.len();
    if t == 0 {
        return Err(Error::argument("LPML needs at least one draw"));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|r| r.len() != n) {
        return Err(Error::argument("log-likelihood rows differ in length"));
    }
    let mut report = LpmlReport { lpml: 0.0, log_cpo: Vec::with_capacity(n), unstable: Vec::new(), excluded: Vec::new() };
    for i in 0..n {
        let col: Vec<f64> = loglik.iter().map(|r| r[i]).collect();
        if col.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::numerical(format!("patient {i} has an undefined log-likelihood")));
        }
        if col.iter().any(|v| *v == f64::NEG_INFINITY) {
            log::warn!("patient {i} has zero likelihood at some draw; excluded from LPML");
            report.excluded.push(i);
            report.log_cpo.push(f64::NEG_INFINITY);
            continue;
        }
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > CPO_RANGE_LIMIT {
            report.unstable.push(i);
        }
        // log CPO = -log( mean exp(-l) ), shifted by the smallest l.
        let s: f64 = col.iter().map(|v| (-(v - lo)).exp()).sum();
        let log_cpo = lo - (s / t as f64).ln();
        report.log_cpo.push(log_cpo);
        report.lpml += log_cpo;
    }
    Ok(report)
}
