use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::category::A1cCategory;
use super::gee::GeeFit;
use crate::error::{Error, Result};

/// Degrees of freedom reported when the between-imputation variance is zero.
pub const DF_CAP: f64 = 1e6;

/// Combined estimate of one coefficient across imputed datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub term: String,
    pub imputations: usize,
    pub estimate: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub df: f64,
    pub lower: f64,
    pub upper: f64,
}

fn quantile_975(df: f64) -> f64 {
    if df >= DF_CAP {
        Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975)
    } else {
        StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(0.975)
    }
}

/// Combine one scalar across datasets: `estimates[k]` with variance `variances[k]`.
pub fn pool_scalar(term: &str, estimates: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::Pooling(format!("pooling needs at least two imputed datasets, got {m}")));
    }
    if variances.len() != m {
        return Err(Error::Pooling("estimate and variance counts differ".into()));
    }
    let mf = m as f64;
    let q = estimates.iter().sum::<f64>() / mf;
    let u = variances.iter().sum::<f64>() / mf;
    let b = estimates.iter().map(|e| (e - q).powi(2)).sum::<f64>() / (mf - 1.0);
    let inflated = (1.0 + 1.0 / mf) * b;
    let total = u + inflated;
    let df = if inflated > 0.0 { ((mf - 1.0) * (1.0 + u / inflated).powi(2)).min(DF_CAP) } else { DF_CAP };
    let half = quantile_975(df) * total.sqrt();
    Ok(PooledEstimate { term: term.to_string(), imputations: m, estimate: q, within: u, between: b, total, df, lower: q - half, upper: q + half })
}

/// Combine per-dataset fits coefficient by coefficient.
pub fn pool(fits: &[GeeFit]) -> Result<Vec<PooledEstimate>> {
    let first = fits.first().ok_or_else(|| Error::Pooling("no fits to pool".into()))?;
    if fits.iter().any(|f| f.names != first.names) {
        return Err(Error::Pooling("fits disagree on their coefficients (an outcome category is empty in some datasets)".into()));
    }
    (0..first.names.len())
        .map(|k| {
            let est: Vec<f64> = fits.iter().map(|f| f.coef[k]).collect();
            let var: Vec<f64> = fits.iter().map(|f| f.cov[(k, k)]).collect();
            pool_scalar(&first.names[k], &est, &var)
        })
        .collect()
}

/// One category row of the imputation versus complete-case comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub term: String,
    pub reference: bool,
    pub imputed: Option<(f64, f64, f64)>,
    pub complete_case: Option<(f64, f64, f64)>,
    /// Imputed minus complete-case estimate.
    pub difference: Option<f64>,
}

/// Long-format export row: `source` is `"BPMI"` or `"CCA"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub term: String,
    pub source: String,
    pub estimate: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Category coefficients side by side, ordered by category lower bound,
/// starting with the reference band at zero.
pub fn compare_report(pooled: &[PooledEstimate], cca: &GeeFit) -> Vec<ComparisonRow> {
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975);
    A1cCategory::ALL
        .iter()
        .map(|c| {
            let term = c.term();
            if *c == A1cCategory::REFERENCE {
                return ComparisonRow { term, reference: true, imputed: Some((0.0, 0.0, 0.0)), complete_case: Some((0.0, 0.0, 0.0)), difference: Some(0.0) };
            }
            let imputed = pooled.iter().find(|p| p.term == term).map(|p| (p.estimate, p.lower, p.upper));
            let complete_case = cca.position(&term).map(|k| {
                let (e, s) = (cca.coef[k], cca.std_err(k));
                (e, e - z * s, e + z * s)
            });
            let difference = match (imputed, complete_case) {
                (Some(a), Some(b)) => Some(a.0 - b.0),
                _ => None,
            };
            ComparisonRow { term, reference: false, imputed, complete_case, difference }
        })
        .collect()
}

pub fn comparison_points(rows: &[ComparisonRow]) -> Vec<ComparisonPoint> {
    let mut out = Vec::new();
    for r in rows {
        for (source, v) in [("BPMI", r.imputed), ("CCA", r.complete_case)] {
            if let Some((estimate, lo95, hi95)) = v {
                out.push(ComparisonPoint { term: r.term.clone(), source: source.into(), estimate, lo95, hi95 });
            }
        }
    }
    out
}
