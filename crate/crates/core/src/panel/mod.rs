//! Patient-quarter panel construction.
//!
//! Raw long-format rows (possibly several per patient-quarter) are collapsed
//! to one row per patient-quarter. Quarters 1-4 form the baseline window and
//! are averaged into the baseline outcome; later quarters are the follow-up
//! panel that the models see.

mod design;
mod io;
mod screen;
mod spline;

pub use design::{pooled_observed_times, 
    allocation_design, assemble_designs, DesignLayout, DesignMatrices, DesignSpec, Term, BASELINE_OUTCOME,
};
pub use io::{read_long_csv, write_panel_csv, RawTable};
pub use screen::{screen_covariates, CovariateTest, ScreenReport};
pub use spline::{quantile_type7, spline_basis, KnotPlacement, SplineBasis, SplineBasisSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw input row before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub patient_id: String,
    pub quarter: u32,
    pub outcome: Option<f64>,
    pub event: bool,
    /// Day offset within the quarter, used to drop measurements taken on or
    /// after the first event of that quarter.
    pub day: Option<f64>,
    /// Values aligned with [`RawTable::covariate_names`]; `None` is an empty cell.
    pub covariates: Vec<Option<f64>>,
    /// 1-based data row number in the source, for error messages.
    pub source_row: usize,
}

/// One aggregated patient-quarter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub quarter: u32,
    pub outcome: Option<f64>,
    pub event: bool,
    pub time_varying: Vec<f64>,
}

impl Record {
    pub fn is_present(&self) -> bool {
        self.outcome.is_some()
    }

    /// Time in years since enrollment.
    pub fn time(&self) -> f64 {
        quarter_time(self.quarter)
    }
}

pub fn quarter_time(quarter: u32) -> f64 {
    f64::from(quarter) / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: String,
    pub baseline_covariates: Vec<f64>,
    pub baseline_outcome: f64,
    pub baseline: Vec<Record>,
    pub followup: Vec<Record>,
}

impl Patient {
    pub fn n_followup(&self) -> usize {
        self.followup.len()
    }

    pub fn n_observed(&self) -> usize {
        self.followup.iter().filter(|r| r.is_present()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoBaselineOutcome,
    NoFollowupQuarters,
    NoObservedFollowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelConfig {
    /// Covariate columns that are time-invariant (taken from the patient's
    /// first row); all others are time-varying.
    pub baseline_columns: Vec<String>,
    pub baseline_first_quarter: u32,
    pub baseline_last_quarter: u32,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self { baseline_columns: Vec::new(), baseline_first_quarter: 1, baseline_last_quarter: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub baseline_names: Vec<String>,
    pub time_varying_names: Vec<String>,
    pub patients: Vec<Patient>,
    pub exclusions: Vec<Exclusion>,
    /// Rows dropped because they precede the baseline window.
    pub pre_baseline_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub patients: usize,
    pub followup_rows: usize,
    pub observed_cells: usize,
    pub missing_cells: usize,
    pub baseline_rows: usize,
    pub excluded: usize,
    pub pre_baseline_rows: usize,
    pub exclusions: Vec<Exclusion>,
}

impl Panel {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn summary(&self) -> PanelSummary {
        let followup_rows = self.patients.iter().map(|p| p.n_followup()).sum();
        let observed_cells = self.patients.iter().map(|p| p.n_observed()).sum();
        PanelSummary {
            patients: self.patients.len(),
            followup_rows,
            observed_cells,
            missing_cells: followup_rows - observed_cells,
            baseline_rows: self.patients.iter().map(|p| p.baseline.len()).sum(),
            excluded: self.exclusions.len(),
            pre_baseline_rows: self.pre_baseline_rows,
            exclusions: self.exclusions.clone(),
        }
    }

    pub fn time_varying_index(&self, name: &str) -> Option<usize> {
        self.time_varying_names.iter().position(|n| n == name)
    }

    pub fn baseline_index(&self, name: &str) -> Option<usize> {
        self.baseline_names.iter().position(|n| n == name)
    }

    /// Canonical one-row-per-patient-quarter records, baseline window included.
    pub fn to_records(&self) -> RawTable {
        let mut covariate_names = self.baseline_names.clone();
        covariate_names.extend(self.time_varying_names.iter().cloned());
        let mut records = Vec::new();
        for p in &self.patients {
            for r in p.baseline.iter().chain(p.followup.iter()) {
                let mut cov: Vec<Option<f64>> = p.baseline_covariates.iter().map(|v| Some(*v)).collect();
                cov.extend(r.time_varying.iter().map(|v| Some(*v)));
                records.push(RawRecord {
                    patient_id: p.id.clone(),
                    quarter: r.quarter,
                    outcome: r.outcome,
                    event: r.event,
                    day: None,
                    covariates: cov,
                    source_row: records.len() + 1,
                });
            }
        }
        RawTable { covariate_names, has_day: false, records }
    }

    /// Replace follow-up outcomes (e.g. with an imputed completion). `values[i]`
    /// must have one entry per follow-up quarter of patient `i`.
    pub fn with_outcomes(&self, values: &[Vec<f64>]) -> Result<Panel> {
        if values.len() != self.patients.len() {
            return Err(Error::argument("completed outcomes do not match patient count"));
        }
        let mut out = self.clone();
        for (p, v) in out.patients.iter_mut().zip(values) {
            if v.len() != p.followup.len() {
                return Err(Error::argument(format!("patient {} has {} follow-up rows, got {}", p.id, p.followup.len(), v.len())));
            }
            for (r, y) in p.followup.iter_mut().zip(v) {
                r.outcome = Some(*y);
            }
        }
        Ok(out)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Collapse raw rows into the patient-quarter panel and apply the inclusion rules.
pub fn build_panel(table: &RawTable, config: &PanelConfig) -> Result<Panel> {
    let mut baseline_idx = Vec::new();
    for name in &config.baseline_columns {
        let i = table
            .covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config(format!("baseline column '{name}' not found; available: {:?}", table.covariate_names)))?;
        baseline_idx.push(i);
    }
    let tv_idx: Vec<usize> = (0..table.covariate_names.len()).filter(|i| !baseline_idx.contains(i)).collect();
    let baseline_names: Vec<String> = baseline_idx.iter().map(|&i| table.covariate_names[i].clone()).collect();
    let time_varying_names: Vec<String> = tv_idx.iter().map(|&i| table.covariate_names[i].clone()).collect();

    let mut by_patient: BTreeMap<&str, BTreeMap<u32, Vec<&RawRecord>>> = BTreeMap::new();
    let mut pre_baseline_rows = 0;
    for rec in &table.records {
        if rec.quarter < config.baseline_first_quarter {
            pre_baseline_rows += 1;
            continue;
        }
        for (k, v) in rec.covariates.iter().enumerate() {
            match v {
                None => {
                    return Err(Error::Parse {
                        row: rec.source_row,
                        message: format!("missing value for covariate '{}'", table.covariate_names[k]),
                    })
                }
                Some(x) if !x.is_finite() => {
                    return Err(Error::Parse {
                        row: rec.source_row,
                        message: format!("non-finite value for covariate '{}'", table.covariate_names[k]),
                    })
                }
                _ => {}
            }
        }
        by_patient.entry(rec.patient_id.as_str()).or_default().entry(rec.quarter).or_default().push(rec);
    }

    let mut patients = Vec::new();
    let mut exclusions = Vec::new();
    for (pid, quarters) in by_patient {
        let first = quarters.values().next().and_then(|rows| rows.first()).expect("non-empty patient");
        let baseline_covariates: Vec<f64> = baseline_idx.iter().map(|&i| first.covariates[i].unwrap_or(f64::NAN)).collect();
        let mut baseline = Vec::new();
        let mut followup = Vec::new();
        for (&q, rows) in &quarters {
            let event = rows.iter().any(|r| r.event);
            let first_event_day = rows
                .iter()
                .filter(|r| r.event)
                .filter_map(|r| r.day)
                .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| match (first_event_day, r.day) {
                    (Some(e), Some(d)) => d < e,
                    _ => true,
                })
                .filter_map(|r| r.outcome)
                .collect();
            let time_varying = tv_idx
                .iter()
                .map(|&k| {
                    let v: Vec<f64> = rows.iter().filter_map(|r| r.covariates[k]).collect();
                    mean(&v).unwrap_or(f64::NAN)
                })
                .collect();
            let record = Record { quarter: q, outcome: mean(&values), event, time_varying };
            if q <= config.baseline_last_quarter {
                baseline.push(record);
            } else {
                followup.push(record);
            }
        }
        let base_values: Vec<f64> = baseline.iter().filter_map(|r| r.outcome).collect();
        let reason = if base_values.is_empty() {
            Some(ExclusionReason::NoBaselineOutcome)
        } else if followup.is_empty() {
            Some(ExclusionReason::NoFollowupQuarters)
        } else if !followup.iter().any(|r| r.is_present()) {
            Some(ExclusionReason::NoObservedFollowup)
        } else {
            None
        };
        if let Some(reason) = reason {
            exclusions.push(Exclusion { patient_id: pid.to_string(), reason });
            continue;
        }
        for w in followup.windows(2) {
            if w[0].quarter == w[1].quarter {
                return Err(Error::Invariant(format!("duplicate quarter {} for patient {pid}", w[0].quarter)));
            }
        }
        patients.push(Patient {
            id: pid.to_string(),
            baseline_covariates,
            baseline_outcome: mean(&base_values).expect("checked non-empty"),
            baseline,
            followup,
        });
    }
    if !exclusions.is_empty() {
        log::warn!("{} patients excluded by inclusion rules", exclusions.len());
    }
    Ok(Panel { baseline_names, time_varying_names, patients, exclusions, pre_baseline_rows })
}
