use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DesignMatrices, Panel};

/// Whether the presence indicators are modelled alongside the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Marginal,
    Joint,
}

/// Design rows for one patient restricted to a row set, with the cross
/// products every outcome block needs.
#[derive(Debug, Clone)]
pub struct RowBlock {
    pub rows: Vec<usize>,
    pub fixed: DMatrix<f64>,
    pub profile: DMatrix<f64>,
    pub random: DMatrix<f64>,
    pub fixed_fixed: DMatrix<f64>,
    pub fixed_profile: DMatrix<f64>,
    pub fixed_random: DMatrix<f64>,
    pub profile_profile: DMatrix<f64>,
    pub profile_random: DMatrix<f64>,
    pub random_random: DMatrix<f64>,
}

impl RowBlock {
    pub fn new(design: &DesignMatrices, rows: Vec<usize>) -> Self {
        let sub = design.select_rows(&rows);
        let (d, s, z) = (sub.fixed, sub.profile, sub.random);
        Self {
            rows,
            fixed_fixed: d.tr_mul(&d),
            fixed_profile: d.tr_mul(&s),
            fixed_random: d.tr_mul(&z),
            profile_profile: s.tr_mul(&s),
            profile_random: s.tr_mul(&z),
            random_random: z.tr_mul(&z),
            fixed: d,
            profile: s,
            random: z,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Presence-model design over all follow-up rows.
#[derive(Debug, Clone)]
pub struct PresenceData {
    pub fixed: DMatrix<f64>,
    pub profile: DMatrix<f64>,
    pub random: DMatrix<f64>,
    /// 1.0 where the outcome is observed.
    pub present: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct PatientData {
    pub id: String,
    pub allocation_covariates: DVector<f64>,
    /// Outcome design over every follow-up quarter.
    pub design: DesignMatrices,
    pub outcome: Vec<Option<f64>>,
    pub observed: RowBlock,
    /// All rows; only built in joint mode, where imputed cells enter the
    /// outcome likelihood.
    pub all: Option<RowBlock>,
    pub missing_rows: Vec<usize>,
    pub presence: Option<PresenceData>,
}

impl PatientData {
    /// Rows the outcome blocks condition on.
    pub fn active(&self) -> &RowBlock {
        self.all.as_ref().unwrap_or(&self.observed)
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    /// Outcome over the active rows, with missing cells filled from `imputed`
    /// (aligned with `missing_rows`).
    pub fn working_outcome(&self, imputed: Option<&[f64]>) -> DVector<f64> {
        let active = self.active();
        let mut k = 0;
        DVector::from_iterator(
            active.len(),
            active.rows.iter().map(|&j| match self.outcome[j] {
                Some(y) => y,
                None => {
                    let v = imputed.map_or(f64::NAN, |m| m[k]);
                    k += 1;
                    v
                }
            }),
        )
    }

    pub fn observed_outcome(&self) -> DVector<f64> {
        DVector::from_iterator(self.observed.len(), self.observed.rows.iter().map(|&j| self.outcome[j].unwrap_or(f64::NAN)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub patients: usize,
    pub classes: usize,
    pub allocation: usize,
    pub fixed: usize,
    pub profile: usize,
    pub random: usize,
    /// (fixed, profile, random) widths of the presence design.
    pub presence: Option<(usize, usize, usize)>,
}

/// Everything the samplers read but never change.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub mode: Mode,
    pub dims: ModelDims,
    pub patients: Vec<PatientData>,
}

impl ModelData {
    /// Assemble per-patient model inputs. `presence_designs` is required in
    /// joint mode and ignored otherwise.
    pub fn new(
        mode: Mode,
        classes: usize,
        panel: &Panel,
        allocation: &[DVector<f64>],
        designs: &[DesignMatrices],
        presence_designs: Option<&[DesignMatrices]>,
    ) -> Result<Self> {
        let n = panel.patients.len();
        if classes == 0 {
            return Err(Error::config("the number of profiles must be at least 1"));
        }
        if n == 0 {
            return Err(Error::data("panel has no patients"));
        }
        if allocation.len() != n || designs.len() != n {
            return Err(Error::argument("design count does not match patient count"));
        }
        let presence_designs = match (mode, presence_designs) {
            (Mode::Joint, Some(p)) if p.len() == n => Some(p),
            (Mode::Joint, _) => return Err(Error::config("joint mode needs one presence design per patient")),
            (Mode::Marginal, _) => None,
        };
        let d0 = &designs[0];
        let dims = ModelDims {
            patients: n,
            classes,
            allocation: allocation[0].len(),
            fixed: d0.fixed.ncols(),
            profile: d0.profile.ncols(),
            random: d0.random.ncols(),
            presence: presence_designs.map(|p| (p[0].fixed.ncols(), p[0].profile.ncols(), p[0].random.ncols())),
        };
        let mut patients = Vec::with_capacity(n);
        for (i, p) in panel.patients.iter().enumerate() {
            let design = designs[i].clone();
            let t = p.followup.len();
            if design.rows() != t || allocation[i].len() != dims.allocation {
                return Err(Error::argument(format!("design for patient {} has inconsistent shape", p.id)));
            }
            let outcome: Vec<Option<f64>> = p.followup.iter().map(|r| r.outcome).collect();
            let observed_rows: Vec<usize> = (0..t).filter(|&j| outcome[j].is_some()).collect();
            let missing_rows: Vec<usize> = (0..t).filter(|&j| outcome[j].is_none()).collect();
            let all = (mode == Mode::Joint).then(|| RowBlock::new(&design, (0..t).collect()));
            let presence = presence_designs.map(|pd| {
                let m = &pd[i];
                PresenceData {
                    fixed: m.fixed.clone(),
                    profile: m.profile.clone(),
                    random: m.random.clone(),
                    present: DVector::from_iterator(t, outcome.iter().map(|y| if y.is_some() { 1.0 } else { 0.0 })),
                }
            });
            if let Some(pr) = &presence {
                if pr.fixed.nrows() != t {
                    return Err(Error::argument(format!("presence design for patient {} has wrong row count", p.id)));
                }
            }
            patients.push(PatientData {
                id: p.id.clone(),
                allocation_covariates: allocation[i].clone(),
                observed: RowBlock::new(&design, observed_rows),
                design,
                outcome,
                all,
                missing_rows,
                presence,
            });
        }
        Ok(Self { mode, dims, patients })
    }

    pub fn n_observed(&self) -> usize {
        self.patients.iter().map(|p| p.observed.len()).sum()
    }

    pub fn n_rows(&self) -> usize {
        self.patients.iter().map(|p| p.n_rows()).sum()
    }
}
