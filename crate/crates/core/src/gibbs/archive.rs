//! Retained posterior draws and their on-disk form.
//!
//! An archive directory holds `archive.json`, a self-describing index, and
//! `archive.bin`, a sequence of column-major little-endian `f64` tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};
use crate::model::{AllocationParams, ChainState, Mode, ModelDims, OutcomeParams, PresenceParams};

pub const ARCHIVE_VERSION: u32 = 1;
const INDEX_FILE: &str = "archive.json";
const DATA_FILE: &str = "archive.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceDraw {
    pub fixed_effects: DVector<f64>,
    pub profile_effects: DMatrix<f64>,
    pub random_cov: DMatrix<f64>,
}

/// One retained iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedDraw {
    pub iteration: usize,
    pub alloc: AllocationParams,
    pub fixed_effects: DVector<f64>,
    pub profile_effects: DMatrix<f64>,
    pub noise_var: DVector<f64>,
    pub random_cov: DMatrix<f64>,
    pub presence: Option<PresenceDraw>,
    pub allocation: Vec<usize>,
    pub random_effects: DMatrix<f64>,
    pub presence_random_effects: Option<DMatrix<f64>>,
    /// Per-patient log-likelihood at this draw.
    pub loglik: Vec<f64>,
}

impl RetainedDraw {
    pub fn from_state(iteration: usize, state: &ChainState, loglik: Vec<f64>) -> Self {
        let o = &state.outcome;
        Self {
            iteration,
            alloc: state.alloc.clone(),
            fixed_effects: o.fixed_effects.clone(),
            profile_effects: o.profile_effects.clone(),
            noise_var: o.noise_var.clone(),
            random_cov: o.random_cov.clone(),
            presence: state.presence.as_ref().map(|p| PresenceDraw {
                fixed_effects: p.fixed_effects.clone(),
                profile_effects: p.profile_effects.clone(),
                random_cov: p.random_cov.clone(),
            }),
            allocation: state.allocation.clone(),
            random_effects: o.random_effects.clone(),
            presence_random_effects: state.presence.as_ref().map(|p| p.random_effects.clone()),
            loglik,
        }
    }

    pub fn outcome_params(&self) -> OutcomeParams {
        OutcomeParams {
            fixed_effects: self.fixed_effects.clone(),
            profile_effects: self.profile_effects.clone(),
            noise_var: self.noise_var.clone(),
            random_cov: self.random_cov.clone(),
            random_effects: self.random_effects.clone(),
        }
    }

    pub fn presence_params(&self) -> Option<PresenceParams> {
        self.presence.as_ref().map(|p| PresenceParams {
            fixed_effects: p.fixed_effects.clone(),
            profile_effects: p.profile_effects.clone(),
            random_cov: p.random_cov.clone(),
            random_effects: self.presence_random_effects.clone().unwrap_or_else(|| DMatrix::zeros(0, 0)),
        })
    }
}

/// Missing-cell values of one stored completed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredImputation {
    pub draw_index: usize,
    pub iteration: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorArchive {
    pub mode: Mode,
    pub dims: ModelDims,
    pub config: FitConfig,
    pub draws: Vec<RetainedDraw>,
    pub imputations: Vec<StoredImputation>,
    pub missing_per_patient: Vec<usize>,
    /// Iterations after which at least one class had no members.
    pub empty_class_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchiveIndex {
    version: u32,
    mode: Mode,
    dims: ModelDims,
    config: FitConfig,
    parameter_columns: Vec<String>,
    missing_per_patient: Vec<usize>,
    imputation_draws: Vec<(usize, usize)>,
    empty_class_iterations: usize,
    tables: Vec<TableEntry>,
}

fn push_matrix(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
}

fn matrix_columns(out: &mut Vec<String>, name: &str, rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            out.push(format!("{name}[{i},{j}]"));
        }
    }
}

/// Names of the scalar parameter columns, in storage order.
pub fn parameter_columns(dims: &ModelDims) -> Vec<String> {
    let mut c = vec!["iteration".to_string()];
    matrix_columns(&mut c, "allocation_coef", dims.classes, dims.allocation);
    c.extend((0..dims.fixed).map(|j| format!("fixed_effects[{j}]")));
    matrix_columns(&mut c, "profile_effects", dims.classes, dims.profile);
    c.extend((0..dims.classes).map(|j| format!("noise_var[{j}]")));
    matrix_columns(&mut c, "random_cov", dims.random, dims.random);
    if let Some((pf, pp, pr)) = dims.presence {
        c.extend((0..pf).map(|j| format!("presence_fixed_effects[{j}]")));
        matrix_columns(&mut c, "presence_profile_effects", dims.classes, pp);
        matrix_columns(&mut c, "presence_random_cov", pr, pr);
    }
    c
}

fn flatten_parameters(d: &RetainedDraw) -> Vec<f64> {
    let mut v = vec![d.iteration as f64];
    push_matrix(&mut v, &d.alloc.coef);
    v.extend(d.fixed_effects.iter());
    push_matrix(&mut v, &d.profile_effects);
    v.extend(d.noise_var.iter());
    push_matrix(&mut v, &d.random_cov);
    if let Some(p) = &d.presence {
        v.extend(p.fixed_effects.iter());
        push_matrix(&mut v, &p.profile_effects);
        push_matrix(&mut v, &p.random_cov);
    }
    v
}

struct Cursor<'a> {
    row: &'a [f64],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, k: usize) -> &[f64] {
        let s = &self.row[self.pos..self.pos + k];
        self.pos += k;
        s
    }

    fn matrix(&mut self, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, self.take(r * c))
    }

    fn vector(&mut self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.take(k))
    }
}

impl PosteriorArchive {
    pub fn new(mode: Mode, dims: ModelDims, config: FitConfig, missing_per_patient: Vec<usize>) -> Self {
        Self { mode, dims, config, draws: Vec::new(), imputations: Vec::new(), missing_per_patient, empty_class_iterations: 0 }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Values of one named scalar parameter across retained draws.
    pub fn parameter_trace(&self, column: &str) -> Option<Vec<f64>> {
        let idx = parameter_columns(&self.dims).iter().position(|c| c == column)?;
        Some(self.draws.iter().map(|d| flatten_parameters(d)[idx]).collect())
    }

    /// Log-likelihood trace as a draws-by-patients table.
    pub fn loglik_table(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.loglik.clone()).collect()
    }

    fn tables(&self) -> Vec<(String, usize, usize, Vec<f64>)> {
        let n = self.dims.patients;
        let rows = self.draws.len();
        let colmajor = |cols: usize, row: &dyn Fn(&RetainedDraw) -> Vec<f64>| -> Vec<f64> {
            let flat: Vec<Vec<f64>> = self.draws.iter().map(row).collect();
            let mut out = Vec::with_capacity(rows * cols);
            for j in 0..cols {
                out.extend(flat.iter().map(|r| r[j]));
            }
            out
        };
        let mut t = Vec::new();
        let pc = parameter_columns(&self.dims).len();
        t.push(("parameters".to_string(), rows, pc, colmajor(pc, &flatten_parameters)));
        t.push(("allocation".to_string(), rows, n, colmajor(n, &|d| d.allocation.iter().map(|&c| c as f64).collect())));
        let r = self.dims.random;
        t.push((
            "random_effects".to_string(),
            rows,
            n * r,
            colmajor(n * r, &|d| {
                let mut v = Vec::new();
                push_matrix(&mut v, &d.random_effects);
                v
            }),
        ));
        if let Some((_, _, pr)) = self.dims.presence {
            t.push((
                "presence_random_effects".to_string(),
                rows,
                n * pr,
                colmajor(n * pr, &|d| {
                    let mut v = Vec::new();
                    if let Some(m) = &d.presence_random_effects {
                        push_matrix(&mut v, m);
                    }
                    v
                }),
            ));
        }
        t.push(("loglik".to_string(), rows, n, colmajor(n, &|d| d.loglik.clone())));
        let width: usize = self.missing_per_patient.iter().sum();
        let m = self.imputations.len();
        let mut imp = Vec::with_capacity(m * width);
        let flat: Vec<Vec<f64>> = self.imputations.iter().map(|s| s.values.concat()).collect();
        for j in 0..width {
            imp.extend(flat.iter().map(|r| r[j]));
        }
        t.push(("imputations".to_string(), m, width, imp));
        t
    }

    /// Write `archive.json` and `archive.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bin = Vec::new();
        let mut entries = Vec::new();
        for (name, rows, cols, data) in self.tables() {
            entries.push(TableEntry { name, rows, cols, offset: bin.len() as u64 });
            for v in data {
                bin.extend_from_slice(&v.to_le_bytes());
            }
        }
        let index = ArchiveIndex {
            version: ARCHIVE_VERSION,
            mode: self.mode,
            dims: self.dims,
            config: self.config.clone(),
            parameter_columns: parameter_columns(&self.dims),
            missing_per_patient: self.missing_per_patient.clone(),
            imputation_draws: self.imputations.iter().map(|s| (s.draw_index, s.iteration)).collect(),
            empty_class_iterations: self.empty_class_iterations,
            tables: entries,
        };
        fs::File::create(dir.join(DATA_FILE))?.write_all(&bin)?;
        let mut json = serde_json::to_vec_pretty(&index)?;
        json.push(b'\n');
        fs::write(dir.join(INDEX_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index: ArchiveIndex = serde_json::from_slice(&fs::read(dir.join(INDEX_FILE))?)?;
        if index.version != ARCHIVE_VERSION {
            return Err(Error::config(format!("archive version {} is not supported", index.version)));
        }
        let bin = fs::read(dir.join(DATA_FILE))?;
        let table = |name: &str| -> Result<(usize, usize, Vec<f64>)> {
            let e = index
                .tables
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::data(format!("archive is missing table '{name}'")))?;
            let start = e.offset as usize;
            let end = start + 8 * e.rows * e.cols;
            if end > bin.len() {
                return Err(Error::data(format!("archive table '{name}' is truncated")));
            }
            let vals = bin[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Ok((e.rows, e.cols, vals))
        };
        // Row `i` of a column-major table.
        let row = |t: &(usize, usize, Vec<f64>), i: usize| -> Vec<f64> { (0..t.1).map(|j| t.2[j * t.0 + i]).collect() };
        let dims = index.dims;
        let (n, l, r) = (dims.patients, dims.classes, dims.random);
        let params = table("parameters")?;
        let alloc = table("allocation")?;
        let re = table("random_effects")?;
        let pre = if dims.presence.is_some() { Some(table("presence_random_effects")?) } else { None };
        let ll = table("loglik")?;
        let mut draws = Vec::with_capacity(params.0);
        for i in 0..params.0 {
            let prow = row(&params, i);
            let mut c = Cursor { row: &prow, pos: 0 };
            let iteration = c.take(1)[0] as usize;
            let coef = c.matrix(l, dims.allocation);
            let fixed_effects = c.vector(dims.fixed);
            let profile_effects = c.matrix(l, dims.profile);
            let noise_var = c.vector(l);
            let random_cov = c.matrix(r, r);
            let presence = dims.presence.map(|(pf, pp, pr)| PresenceDraw {
                fixed_effects: c.vector(pf),
                profile_effects: c.matrix(l, pp),
                random_cov: c.matrix(pr, pr),
            });
            draws.push(RetainedDraw {
                iteration,
                alloc: AllocationParams { coef },
                fixed_effects,
                profile_effects,
                noise_var,
                random_cov,
                presence,
                allocation: row(&alloc, i).into_iter().map(|v| v as usize).collect(),
                random_effects: DMatrix::from_row_slice(n, r, &row(&re, i)),
                presence_random_effects: pre.as_ref().zip(dims.presence).map(|(t, (_, _, pr))| DMatrix::from_row_slice(n, pr, &row(t, i))),
                loglik: row(&ll, i),
            });
        }
        let imp = table("imputations")?;
        let mut imputations = Vec::with_capacity(imp.0);
        for (k, &(draw_index, iteration)) in index.imputation_draws.iter().enumerate() {
            let flat = row(&imp, k);
            let mut pos = 0;
            let values = index
                .missing_per_patient
                .iter()
                .map(|&m| {
                    let v = flat[pos..pos + m].to_vec();
                    pos += m;
                    v
                })
                .collect();
            imputations.push(StoredImputation { draw_index, iteration, values });
        }
        Ok(Self {
            mode: index.mode,
            dims,
            config: index.config,
            draws,
            imputations,
            missing_per_patient: index.missing_per_patient,
            empty_class_iterations: index.empty_class_iterations,
        })
    }
}
