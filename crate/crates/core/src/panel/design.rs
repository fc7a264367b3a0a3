//! Per-patient design matrices for the fixed, profile-specific and
//! random-effect parts of a linear predictor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spline::{SplineBasis, SplineBasisSpec};
use super::{Panel, Patient};
use crate::error::{Error, Result};

/// Pseudo-column holding the averaged baseline-window outcome.
pub const BASELINE_OUTCOME: &str = "baseline_outcome";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    /// Time in years.
    Time,
    Column(String),
    Spline(SplineBasisSpec),
}

impl Term {
    /// `"1"` is the intercept, `"time"` the time in years, `"spline"` the
    /// given basis; anything else names a covariate column.
    pub fn parse(token: &str, spline: &SplineBasisSpec) -> Term {
        match token.trim() {
            "1" | "intercept" => Term::Intercept,
            "time" => Term::Time,
            "spline" => Term::Spline(spline.clone()),
            other => Term::Column(other.to_string()),
        }
    }

    pub fn parse_list(tokens: &[String], spline: &SplineBasisSpec) -> Vec<Term> {
        tokens.iter().map(|t| Term::parse(t, spline)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub fixed: Vec<Term>,
    pub profile: Vec<Term>,
    pub random: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrices {
    pub fixed: DMatrix<f64>,
    pub profile: DMatrix<f64>,
    pub random: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn rows(&self) -> usize {
        self.fixed.nrows()
    }

    /// Restrict to a subset of rows (e.g. the observed quarters).
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrices {
        DesignMatrices {
            fixed: self.fixed.select_rows(rows),
            profile: self.profile.select_rows(rows),
            random: self.random.select_rows(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub fixed: Vec<String>,
    pub profile: Vec<String>,
    pub random: Vec<String>,
    pub spline: Option<SplineBasis>,
    /// Spline columns dropped because they vanish at every panel time.
    pub dropped: Vec<String>,
}

impl DesignLayout {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.fixed.len(), self.profile.len(), self.random.len())
    }
}

enum Source {
    Intercept,
    Time,
    TimeVarying(usize),
    Baseline(usize),
    BaselineOutcome,
    Spline(usize),
}

fn resolve_terms(
    panel: &Panel,
    terms: &[Term],
    basis: &mut Option<SplineBasis>,
    pooled: &[f64],
) -> Result<(Vec<String>, Vec<Source>)> {
    let mut names = Vec::new();
    let mut sources = Vec::new();
    for term in terms {
        match term {
            Term::Intercept => {
                names.push("(intercept)".into());
                sources.push(Source::Intercept);
            }
            Term::Time => {
                names.push("time".into());
                sources.push(Source::Time);
            }
            Term::Column(c) if c == BASELINE_OUTCOME => {
                names.push(c.clone());
                sources.push(Source::BaselineOutcome);
            }
            Term::Column(c) => {
                if let Some(i) = panel.time_varying_index(c) {
                    sources.push(Source::TimeVarying(i));
                } else if let Some(i) = panel.baseline_index(c) {
                    sources.push(Source::Baseline(i));
                } else {
                    let mut available: Vec<&str> = panel.time_varying_names.iter().map(String::as_str).collect();
                    available.extend(panel.baseline_names.iter().map(String::as_str));
                    available.push(BASELINE_OUTCOME);
                    return Err(Error::config(format!("unknown column '{c}'; available: {available:?}")));
                }
                names.push(c.clone());
            }
            Term::Spline(spec) => {
                let b = match basis {
                    Some(b) => b.clone(),
                    None => {
                        let b = spec.resolve(pooled)?;
                        *basis = Some(b.clone());
                        b
                    }
                };
                for j in 0..b.ncols() {
                    names.push(format!("spline{}", j + 1));
                    sources.push(Source::Spline(j));
                }
            }
        }
    }
    Ok((names, sources))
}

fn fill(p: &Patient, sources: &[Source], basis: Option<&SplineBasis>) -> DMatrix<f64> {
    let t = p.followup.len();
    let mut m = DMatrix::zeros(t, sources.len());
    for (row, rec) in p.followup.iter().enumerate() {
        let spline_row = basis.map(|b| b.eval(rec.time()));
        for (col, s) in sources.iter().enumerate() {
            m[(row, col)] = match s {
                Source::Intercept => 1.0,
                Source::Time => rec.time(),
                Source::TimeVarying(i) => rec.time_varying[*i],
                Source::Baseline(i) => p.baseline_covariates[*i],
                Source::BaselineOutcome => p.baseline_outcome,
                Source::Spline(j) => spline_row.as_ref().map_or(0.0, |r| r[*j]),
            };
        }
    }
    m
}

/// Times (years) of every observed follow-up outcome, pooled over patients.
pub fn pooled_observed_times(panel: &Panel) -> Vec<f64> {
    panel
        .patients
        .iter()
        .flat_map(|p| p.followup.iter().filter(|r| r.is_present()).map(|r| r.time()))
        .collect()
}

/// Build `(D, D*, D**)` for every patient. Spline knots are shared by all
/// patients and resolved from the pooled observed times.
pub fn assemble_designs(panel: &Panel, spec: &DesignSpec) -> Result<(DesignLayout, Vec<DesignMatrices>)> {
    if spec.profile.is_empty() {
        return Err(Error::config("profile-specific design is empty; the mixture would be unidentified"));
    }
    if spec.random.is_empty() {
        return Err(Error::config("random-effect design is empty"));
    }
    let pooled = pooled_observed_times(panel);
    let mut basis = None;
    let (mut fixed_names, fixed_src) = resolve_terms(panel, &spec.fixed, &mut basis, &pooled)?;
    let (mut profile_names, profile_src) = resolve_terms(panel, &spec.profile, &mut basis, &pooled)?;
    let (mut random_names, random_src) = resolve_terms(panel, &spec.random, &mut basis, &pooled)?;

    let mut mats: Vec<DesignMatrices> = panel
        .patients
        .iter()
        .map(|p| DesignMatrices {
            fixed: fill(p, &fixed_src, basis.as_ref()),
            profile: fill(p, &profile_src, basis.as_ref()),
            random: fill(p, &random_src, basis.as_ref()),
        })
        .collect();

    let mut dropped = Vec::new();
    for block in 0..3 {
        let (names, sources) = match block {
            0 => (&mut fixed_names, &fixed_src),
            1 => (&mut profile_names, &profile_src),
            _ => (&mut random_names, &random_src),
        };
        let mut zero_cols = Vec::new();
        for (j, src) in sources.iter().enumerate() {
            let all_zero = mats.iter().all(|m| {
                let mat = match block {
                    0 => &m.fixed,
                    1 => &m.profile,
                    _ => &m.random,
                };
                mat.column(j).iter().all(|v| *v == 0.0)
            });
            if all_zero {
                if matches!(src, Source::Spline(_)) {
                    zero_cols.push(j);
                } else {
                    return Err(Error::config(format!("design column '{}' is zero for every patient-quarter", names[j])));
                }
            }
        }
        if zero_cols.is_empty() {
            continue;
        }
        for &j in zero_cols.iter().rev() {
            log::warn!("dropping spline column '{}': zero at every panel time (knot on boundary)", names[j]);
            dropped.push(names.remove(j));
        }
        for m in &mut mats {
            let mat = match block {
                0 => &mut m.fixed,
                1 => &mut m.profile,
                _ => &mut m.random,
            };
            *mat = mat.clone().remove_columns_at(&zero_cols);
        }
    }
    if profile_names.is_empty() {
        return Err(Error::config("profile-specific design has no usable columns"));
    }
    let layout = DesignLayout { fixed: fixed_names, profile: profile_names, random: random_names, spline: basis, dropped };
    Ok((layout, mats))
}

/// Baseline covariate vectors `X_i0 = (1, columns...)` for the allocation model.
pub fn allocation_design(panel: &Panel, columns: &[String]) -> Result<(Vec<String>, Vec<DVector<f64>>)> {
    let mut names = vec!["(intercept)".to_string()];
    let mut getters: Vec<Box<dyn Fn(&Patient) -> f64>> = Vec::new();
    for c in columns {
        if c == BASELINE_OUTCOME {
            getters.push(Box::new(|p: &Patient| p.baseline_outcome));
        } else if let Some(i) = panel.baseline_index(c) {
            getters.push(Box::new(move |p: &Patient| p.baseline_covariates[i]));
        } else {
            return Err(Error::config(format!(
                "allocation covariate '{c}' is not a baseline column; available: {:?} and '{BASELINE_OUTCOME}'",
                panel.baseline_names
            )));
        }
        names.push(c.clone());
    }
    let rows = panel
        .patients
        .iter()
        .map(|p| {
            let mut v = vec![1.0];
            v.extend(getters.iter().map(|g| g(p)));
            DVector::from_vec(v)
        })
        .collect();
    Ok((names, rows))
}
