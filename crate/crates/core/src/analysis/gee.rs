use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::category::A1cCategory;
use crate::error::{Error, Result};
use crate::linalg::{logistic, logistic_irls, spd_inverse};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WorkingCorrelation {
    #[default]
    Exchangeable,
    Independence,
}

/// Which follow-up outcomes feed the event model.
#[derive(Debug, Clone, Copy)]
pub enum OutcomeSource<'a> {
    /// Only quarters with an observed outcome (complete-case analysis).
    Observed,
    /// Every quarter, from a completed dataset aligned with the panel.
    Completed(&'a [Vec<f64>]),
}

/// Design for the event model, rows grouped by patient.
#[derive(Debug, Clone, PartialEq)]
pub struct EventData {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Row count of each patient, in row order.
    pub cluster_sizes: Vec<usize>,
}

/// Event indicator on category indicators (reference: lowest band), an
/// intercept and optional adjusters (`"time"`, or any covariate column).
pub fn event_data(panel: &Panel, source: OutcomeSource, adjusters: &[String]) -> Result<EventData> {
    enum Adj {
        Time,
        Baseline(usize),
        TimeVarying(usize),
    }
    let adj: Vec<Adj> = adjusters
        .iter()
        .map(|a| {
            if a == "time" {
                Ok(Adj::Time)
            } else if let Some(k) = panel.time_varying_index(a) {
                Ok(Adj::TimeVarying(k))
            } else if let Some(k) = panel.baseline_index(a) {
                Ok(Adj::Baseline(k))
            } else {
                Err(Error::config(format!("event-model adjuster '{a}' is not a panel column")))
            }
        })
        .collect::<Result<_>>()?;
    if let OutcomeSource::Completed(v) = source {
        if v.len() != panel.patients.len() || v.iter().zip(&panel.patients).any(|(o, p)| o.len() != p.followup.len()) {
            return Err(Error::argument("completed outcomes do not match the panel shape"));
        }
    }
    let mut rows: Vec<(A1cCategory, Vec<f64>, f64)> = Vec::new();
    let mut sizes = Vec::new();
    for (i, p) in panel.patients.iter().enumerate() {
        let mut m = 0;
        for (j, r) in p.followup.iter().enumerate() {
            let value = match source {
                OutcomeSource::Observed => match r.outcome {
                    Some(v) => v,
                    None => continue,
                },
                OutcomeSource::Completed(v) => v[i][j],
            };
            let extra = adj
                .iter()
                .map(|a| match a {
                    Adj::Time => r.time(),
                    Adj::Baseline(k) => p.baseline_covariates[*k],
                    Adj::TimeVarying(k) => r.time_varying[*k],
                })
                .collect();
            rows.push((A1cCategory::of(value)?, extra, if r.event { 1.0 } else { 0.0 }));
            m += 1;
        }
        if m > 0 {
            sizes.push(m);
        }
    }
    if rows.is_empty() {
        return Err(Error::data("no rows for the event model"));
    }
    let mut present = [false; 7];
    for (c, _, _) in &rows {
        present[c.index()] = true;
    }
    let cats: Vec<A1cCategory> = A1cCategory::ALL[1..].iter().copied().filter(|c| present[c.index()]).collect();
    for c in A1cCategory::ALL[1..].iter().filter(|c| !present[c.index()]) {
        log::warn!("outcome category {} is empty; its indicator is dropped", c.label());
    }
    let mut names = vec!["(intercept)".to_string()];
    names.extend(cats.iter().map(|c| c.term()));
    names.extend(adjusters.iter().cloned());
    let p = names.len();
    let mut x = DMatrix::zeros(rows.len(), p);
    let mut y = DVector::zeros(rows.len());
    for (r, (c, extra, ev)) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if let Some(k) = cats.iter().position(|d| d == c) {
            x[(r, 1 + k)] = 1.0;
        }
        for (k, v) in extra.iter().enumerate() {
            x[(r, 1 + cats.len() + k)] = *v;
        }
        y[r] = *ev;
    }
    Ok(EventData { names, x, y, cluster_sizes: sizes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeFit {
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    /// Sandwich covariance clustered by patient.
    pub cov: DMatrix<f64>,
    pub naive_cov: DMatrix<f64>,
    pub correlation: WorkingCorrelation,
    pub rho: f64,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GeeFit {
    pub fn std_err(&self, k: usize) -> f64 {
        self.cov[(k, k)].sqrt()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub const GEE_MAX_ITER: usize = 100;
pub const GEE_TOL: f64 = 1e-8;

/// `R^{-1} v` for an exchangeable correlation matrix.
fn exch_solve(v: &DVector<f64>, rho: f64) -> DVector<f64> {
    let m = v.len() as f64;
    let c = rho / (1.0 + (m - 1.0) * rho);
    let s = v.sum();
    v.map(|x| (x - c * s) / (1.0 - rho))
}

struct Pieces {
    hessian: DMatrix<f64>,
    score: DVector<f64>,
    meat: DMatrix<f64>,
}

/// Marginal logistic regression fitted by GEE.
pub fn fit_gee(data: &EventData, correlation: WorkingCorrelation) -> Result<GeeFit> {
    let (n, p) = (data.x.nrows(), data.x.ncols());
    if n <= p {
        return Err(Error::data("too few rows for the event model"));
    }
    let mut beta = logistic_irls(&data.x, &data.y, 100, 1e-10).map(|f| f.coef).unwrap_or_else(|_| DVector::zeros(p));
    let max_size = data.cluster_sizes.iter().copied().max().unwrap_or(1);
    let pairs: f64 = data.cluster_sizes.iter().map(|&m| (m * (m.max(1) - 1)) as f64 / 2.0).sum();

    let moments = |beta: &DVector<f64>| -> (DVector<f64>, DVector<f64>, f64, f64) {
        let mu = (&data.x * beta).map(logistic);
        let a = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let e = DVector::from_iterator(n, (0..n).map(|r| (data.y[r] - mu[r]) / a[r].sqrt()));
        let scale = e.norm_squared() / (n - p) as f64;
        let mut rho = 0.0;
        if correlation == WorkingCorrelation::Exchangeable && pairs > p as f64 {
            let mut num = 0.0;
            let mut start = 0;
            for &m in &data.cluster_sizes {
                let seg = e.rows(start, m);
                let s = seg.sum();
                num += 0.5 * (s * s - seg.norm_squared());
                start += m;
            }
            rho = num / ((pairs - p as f64) * scale);
            let floor = if max_size > 1 { -1.0 / (max_size as f64 - 1.0) + 1e-6 } else { 0.0 };
            rho = rho.clamp(floor, 0.99);
        }
        (a, e, scale, rho)
    };
    let pieces = |a: &DVector<f64>, e: &DVector<f64>, rho: f64| -> Pieces {
        let mut hessian = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        let mut meat = DMatrix::zeros(p, p);
        let mut start = 0;
        for &m in &data.cluster_sizes {
            let mut w = data.x.rows(start, m).clone_owned();
            for r in 0..m {
                w.row_mut(r).scale_mut(a[start + r].sqrt());
            }
            let ei = e.rows(start, m).clone_owned();
            let mut rinv_w = DMatrix::zeros(m, p);
            for k in 0..p {
                rinv_w.set_column(k, &exch_solve(&w.column(k).clone_owned(), rho));
            }
            hessian += w.tr_mul(&rinv_w);
            let g = rinv_w.tr_mul(&ei);
            meat.ger(1.0, &g, &g, 1.0);
            score += g;
            start += m;
        }
        Pieces { hessian, score, meat }
    };

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=GEE_MAX_ITER {
        iterations = it;
        let (a, e, _, rho) = moments(&beta);
        let pc = pieces(&a, &e, rho);
        let step = pc.hessian.clone().lu().solve(&pc.score).ok_or_else(|| Error::numerical("singular GEE information matrix"))?;
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("GEE coefficients diverged"));
        }
        if step.amax() < GEE_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("GEE did not converge in {GEE_MAX_ITER} iterations; reporting the last iterate");
    }
    let (a, e, scale, rho) = moments(&beta);
    let pc = pieces(&a, &e, rho);
    let bread = spd_inverse(&pc.hessian)?;
    let cov = &bread * &pc.meat * &bread;
    Ok(GeeFit { names: data.names.clone(), coef: beta, cov, naive_cov: &bread * scale, correlation, rho, scale, iterations, converged })
}

/// Event model on one completed dataset.
pub fn fit_event_model(panel: &Panel, completed: &[Vec<f64>], adjusters: &[String], correlation: WorkingCorrelation) -> Result<GeeFit> {
    fit_gee(&event_data(panel, OutcomeSource::Completed(completed), adjusters)?, correlation)
}

/// Event model on the quarters with an observed outcome only.
pub fn cca_analysis(panel: &Panel, adjusters: &[String], correlation: WorkingCorrelation) -> Result<GeeFit> {
    fit_gee(&event_data(panel, OutcomeSource::Observed, adjusters)?, correlation)
}
