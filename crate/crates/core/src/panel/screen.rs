//! Covariate screening: union of covariates significant in an outcome OLS
//! fit or in a presence logistic fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::Panel;
use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, logistic_irls, ols};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTest {
    pub name: String,
    pub estimate: f64,
    pub std_err: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub alpha: f64,
    pub selected: Vec<String>,
    pub ols: Vec<CovariateTest>,
    pub logistic: Vec<CovariateTest>,
    pub rejected_constant: Vec<String>,
    pub dropped_collinear: Vec<String>,
    /// Covariates that separate presence; excluded from the logistic fit only.
    pub separation: Vec<String>,
    pub warnings: Vec<String>,
}

fn column_values(panel: &Panel, name: &str) -> Option<Vec<f64>> {
    let getter: Box<dyn Fn(&super::Patient, &super::Record) -> f64> = if let Some(i) = panel.time_varying_index(name) {
        Box::new(move |_, r| r.time_varying[i])
    } else if let Some(i) = panel.baseline_index(name) {
        Box::new(move |p, _| p.baseline_covariates[i])
    } else if name == super::BASELINE_OUTCOME {
        Box::new(|p, _| p.baseline_outcome)
    } else {
        return None;
    };
    Some(
        panel
            .patients
            .iter()
            .flat_map(|p| p.followup.iter().map(|r| getter(p, r)).collect::<Vec<_>>())
            .collect(),
    )
}

/// True when some threshold on `x` perfectly splits presence from absence.
fn separates(x: &[f64], present: &[bool]) -> bool {
    let (mut min1, mut max1, mut min0, mut max0) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &r) in x.iter().zip(present) {
        if r {
            min1 = min1.min(v);
            max1 = max1.max(v);
        } else {
            min0 = min0.min(v);
            max0 = max0.max(v);
        }
    }
    if !min0.is_finite() || !min1.is_finite() {
        return false;
    }
    // complete separation, or a binary covariate with one level of constant presence
    if max0 < min1 || max1 < min0 {
        return true;
    }
    let mut levels: Vec<f64> = x.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() == 2 {
        for lv in levels {
            let rs: Vec<bool> = x.iter().zip(present).filter(|(v, _)| **v == lv).map(|(_, r)| *r).collect();
            if rs.iter().all(|r| *r) || rs.iter().all(|r| !*r) {
                return true;
            }
        }
    }
    false
}

/// Screen `candidates` (all covariates when `None`) at significance `alpha`.
pub fn screen_covariates(panel: &Panel, alpha: f64, candidates: Option<&[String]>) -> Result<ScreenReport> {
    if panel.patients.is_empty() {
        return Err(Error::data("cannot screen an empty panel"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::argument(format!("significance level {alpha} outside (0, 1)")));
    }
    let names: Vec<String> = match candidates {
        Some(c) => c.to_vec(),
        None => panel.baseline_names.iter().chain(panel.time_varying_names.iter()).cloned().collect(),
    };
    let mut warnings = Vec::new();
    let mut rejected_constant = Vec::new();
    let mut kept: Vec<(String, Vec<f64>)> = Vec::new();
    for n in &names {
        let vals = column_values(panel, n).ok_or_else(|| Error::config(format!("unknown candidate covariate '{n}'")))?;
        let first = vals.first().copied().unwrap_or(0.0);
        if vals.iter().all(|v| *v == first) {
            warnings.push(format!("covariate '{n}' is constant and was rejected"));
            rejected_constant.push(n.clone());
        } else {
            kept.push((n.clone(), vals));
        }
    }

    let cells: Vec<Option<f64>> = panel.patients.iter().flat_map(|p| p.followup.iter().map(|r| r.outcome)).collect();
    let rows = cells.len();
    let present: Vec<bool> = cells.iter().map(Option::is_some).collect();
    let mut x = DMatrix::from_element(rows, kept.len() + 1, 1.0);
    for (j, (_, vals)) in kept.iter().enumerate() {
        for (i, v) in vals.iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    let dependent = dependent_columns(&x, 1e-9);
    let mut dropped_collinear = Vec::new();
    for &j in dependent.iter().rev() {
        if j == 0 {
            continue;
        }
        let name = kept[j - 1].0.clone();
        warnings.push(format!("covariate '{name}' is collinear with earlier candidates and was dropped"));
        dropped_collinear.insert(0, name);
    }
    let dep_cols: Vec<usize> = dependent.into_iter().filter(|j| *j > 0).collect();
    let x = x.remove_columns_at(&dep_cols);
    let kept: Vec<(String, Vec<f64>)> =
        kept.into_iter().enumerate().filter(|(j, _)| !dep_cols.contains(&(j + 1))).map(|(_, k)| k).collect();

    // (a) OLS of observed outcomes, ignoring within-patient correlation.
    let obs_rows: Vec<usize> = (0..rows).filter(|&i| present[i]).collect();
    let x_obs = x.select_rows(&obs_rows);
    let y_obs = DVector::from_iterator(obs_rows.len(), obs_rows.iter().map(|&i| cells[i].unwrap_or(f64::NAN)));
    let mut ols_tests = Vec::new();
    if !kept.is_empty() && obs_rows.len() > x.ncols() {
        let fit = ols(&x_obs, &y_obs, 1e-6)?;
        let t = StudentsT::new(0.0, 1.0, fit.df_resid as f64).map_err(|e| Error::numerical(e.to_string()))?;
        for (j, (name, _)) in kept.iter().enumerate() {
            let est = fit.coef[j + 1];
            let se = fit.std_err[j + 1];
            let p = 2.0 * (1.0 - t.cdf((est / se).abs()));
            ols_tests.push(CovariateTest { name: name.clone(), estimate: est, std_err: se, p_value: p });
        }
    }

    // (b) logistic regression of presence on all follow-up rows.
    let mut separation = Vec::new();
    let mut in_logit: Vec<usize> = Vec::new();
    for (j, (name, vals)) in kept.iter().enumerate() {
        if separates(vals, &present) {
            warnings.push(format!("covariate '{name}' separates presence; excluded from the logistic screen"));
            separation.push(name.clone());
        } else {
            in_logit.push(j);
        }
    }
    let mut logistic_tests = Vec::new();
    let y_pres = DVector::from_iterator(rows, present.iter().map(|r| if *r { 1.0 } else { 0.0 }));
    let all_same = present.iter().all(|r| *r) || present.iter().all(|r| !*r);
    if all_same {
        warnings.push("presence indicator is constant; logistic screen skipped".into());
    }
    while !in_logit.is_empty() && !all_same {
        let mut cols = vec![0];
        cols.extend(in_logit.iter().map(|j| j + 1));
        let xl = x.select_columns(&cols);
        let fit = logistic_irls(&xl, &y_pres, 100, 1e-10);
        match fit {
            Ok(f) if f.converged && f.coef.iter().all(|c| c.abs() < 30.0) => {
                let z = Normal::standard();
                for (k, &j) in in_logit.iter().enumerate() {
                    let est = f.coef[k + 1];
                    let se = f.std_err[k + 1];
                    let p = 2.0 * (1.0 - z.cdf((est / se).abs()));
                    logistic_tests.push(CovariateTest { name: kept[j].0.clone(), estimate: est, std_err: se, p_value: p });
                }
                break;
            }
            other => {
                // Quasi-separation in several dimensions: drop the covariate with
                // the largest standardized coefficient and refit.
                let worst = match &other {
                    Ok(f) => (0..in_logit.len())
                        .max_by(|&a, &b| {
                            let sa = f.coef[a + 1].abs() * x.column(in_logit[a] + 1).variance().sqrt();
                            let sb = f.coef[b + 1].abs() * x.column(in_logit[b] + 1).variance().sqrt();
                            sa.total_cmp(&sb)
                        })
                        .unwrap(),
                    Err(_) => in_logit.len() - 1,
                };
                let j = in_logit.remove(worst);
                warnings.push(format!("logistic fit did not converge; '{}' flagged for separation", kept[j].0));
                separation.push(kept[j].0.clone());
            }
        }
    }

    let selected: Vec<String> = names
        .iter()
        .filter(|n| {
            ols_tests.iter().chain(logistic_tests.iter()).any(|t| &t.name == *n && t.p_value < alpha)
        })
        .cloned()
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ScreenReport {
        alpha,
        selected,
        ols: ols_tests,
        logistic: logistic_tests,
        rejected_constant,
        dropped_collinear,
        separation,
        warnings,
    })
}
