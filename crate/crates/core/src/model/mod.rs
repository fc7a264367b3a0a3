//! Shared model objects for marginal and joint profiling.
//!
//! Classes are 0-based internally; class 0 is the reference profile whose
//! profile-specific coefficients are pinned at zero.

mod data;
mod spec;

pub use data::{Mode, ModelData, ModelDims, PatientData, PresenceData, RowBlock};
pub use spec::{DesignColumns, ModelLayout, ModelSpec};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky_jittered, log1p_exp};
use crate::samplers::sample_categorical_log;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Multinomial-logistic allocation coefficients, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationParams {
    pub coef: DMatrix<f64>,
}

impl AllocationParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self { coef: DMatrix::zeros(classes, dim) }
    }

    pub fn linear_predictors(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.coef * x0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub fixed_effects: DVector<f64>,
    /// Class-by-column profile effects; row 0 stays zero.
    pub profile_effects: DMatrix<f64>,
    pub noise_var: DVector<f64>,
    pub random_cov: DMatrix<f64>,
    /// One row per patient.
    pub random_effects: DMatrix<f64>,
}

impl OutcomeParams {
    /// Mean of the outcome over `block` for class `class`, without random effects.
    pub fn population_mean(&self, block: &RowBlock, class: usize) -> DVector<f64> {
        &block.fixed * &self.fixed_effects + &block.profile * self.profile_effects.row(class).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceParams {
    pub fixed_effects: DVector<f64>,
    pub profile_effects: DMatrix<f64>,
    pub random_effects: DMatrix<f64>,
    pub random_cov: DMatrix<f64>,
}

impl PresenceParams {
    /// Logit of presence for every follow-up row of a patient.
    pub fn linear_predictor(&self, design: &PresenceData, class: usize, random: &DVector<f64>) -> DVector<f64> {
        &design.fixed * &self.fixed_effects + &design.profile * self.profile_effects.row(class).transpose() + &design.random * random
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub fixed_cov: DMatrix<f64>,
    pub profile_cov: DMatrix<f64>,
    pub noise_shape: f64,
    pub noise_rate: f64,
    pub random_dof: f64,
    pub random_scale: DMatrix<f64>,
    /// Allocation prior mean, one row per class.
    pub allocation_mean: DMatrix<f64>,
    pub allocation_cov: DMatrix<f64>,
    pub presence_fixed_cov: Option<DMatrix<f64>>,
    pub presence_profile_cov: Option<DMatrix<f64>>,
    pub presence_random_dof: f64,
    pub presence_random_scale: Option<DMatrix<f64>>,
}

impl PriorSpec {
    /// Unit-scale defaults. Inverse-Wishart degrees of freedom are
    /// `dim + 2` so the prior is proper with a finite mean.
    pub fn default_for(dims: &ModelDims) -> Self {
        let (pf, pp, pr) = dims.presence.unwrap_or((0, 0, 0));
        Self {
            fixed_cov: DMatrix::identity(dims.fixed, dims.fixed),
            profile_cov: DMatrix::identity(dims.profile, dims.profile),
            noise_shape: 1.0,
            noise_rate: 1.0,
            random_dof: dims.random as f64 + 2.0,
            random_scale: DMatrix::identity(dims.random, dims.random),
            allocation_mean: DMatrix::zeros(dims.classes, dims.allocation),
            allocation_cov: DMatrix::identity(dims.allocation, dims.allocation),
            presence_fixed_cov: dims.presence.map(|_| DMatrix::identity(pf, pf)),
            presence_profile_cov: dims.presence.map(|_| DMatrix::identity(pp, pp)),
            presence_random_dof: pr as f64 + 2.0,
            presence_random_scale: dims.presence.map(|_| DMatrix::identity(pr, pr)),
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        let square = |m: &DMatrix<f64>, k: usize, what: &str| -> Result<()> {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::config(format!("prior {what} must be {k}x{k}")));
            }
            cholesky_jittered(m).map(|_| ()).map_err(|_| Error::config(format!("prior {what} is not positive definite")))
        };
        square(&self.fixed_cov, dims.fixed, "fixed-effect covariance")?;
        square(&self.profile_cov, dims.profile, "profile-effect covariance")?;
        square(&self.random_scale, dims.random, "random-effect scale")?;
        square(&self.allocation_cov, dims.allocation, "allocation covariance")?;
        if !(self.noise_shape > 0.0 && self.noise_rate > 0.0) {
            return Err(Error::config("inverse-gamma prior needs positive shape and rate"));
        }
        if self.random_dof <= dims.random as f64 - 1.0 {
            return Err(Error::config("random-effect inverse-Wishart degrees of freedom too small"));
        }
        if self.allocation_mean.nrows() != dims.classes || self.allocation_mean.ncols() != dims.allocation {
            return Err(Error::config("allocation prior mean has the wrong shape"));
        }
        if let Some((pf, pp, pr)) = dims.presence {
            let get = |m: &Option<DMatrix<f64>>, what: &str| m.clone().ok_or_else(|| Error::config(format!("joint mode needs a prior {what}")));
            square(&get(&self.presence_fixed_cov, "presence fixed-effect covariance")?, pf, "presence fixed-effect covariance")?;
            square(&get(&self.presence_profile_cov, "presence profile-effect covariance")?, pp, "presence profile-effect covariance")?;
            square(&get(&self.presence_random_scale, "presence random-effect scale")?, pr, "presence random-effect scale")?;
            if self.presence_random_dof <= pr as f64 - 1.0 {
                return Err(Error::config("presence random-effect inverse-Wishart degrees of freedom too small"));
            }
        }
        Ok(())
    }
}

/// Complete Gibbs state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub allocation: Vec<usize>,
    pub alloc: AllocationParams,
    pub outcome: OutcomeParams,
    pub presence: Option<PresenceParams>,
    /// Allocation auxiliaries, patients by classes.
    pub pg_alloc: DMatrix<f64>,
    /// Presence auxiliaries per patient and follow-up row (joint mode).
    pub pg_presence: Vec<Vec<f64>>,
    /// Current draws of the missing cells per patient (joint mode).
    pub imputed: Option<Vec<Vec<f64>>>,
}

impl ChainState {
    pub fn random_effect(&self, i: usize) -> DVector<f64> {
        self.outcome.random_effects.row(i).transpose()
    }

    pub fn presence_random_effect(&self, i: usize) -> Option<DVector<f64>> {
        self.presence.as_ref().map(|p| p.random_effects.row(i).transpose())
    }

    pub fn imputed_for(&self, i: usize) -> Option<&[f64]> {
        self.imputed.as_ref().map(|m| m[i].as_slice())
    }

    /// NaN/inf scan used after each block.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let bad = |m: &DMatrix<f64>| m.iter().any(|v| !v.is_finite());
        let badv = |m: &DVector<f64>| m.iter().any(|v| !v.is_finite());
        if bad(&self.alloc.coef) {
            return Some("allocation coefficients");
        }
        let o = &self.outcome;
        if badv(&o.fixed_effects) {
            return Some("fixed effects");
        }
        if bad(&o.profile_effects) {
            return Some("profile effects");
        }
        if badv(&o.noise_var) {
            return Some("noise variances");
        }
        if bad(&o.random_cov) {
            return Some("random-effect covariance");
        }
        if bad(&o.random_effects) {
            return Some("random effects");
        }
        if let Some(p) = &self.presence {
            if badv(&p.fixed_effects) || bad(&p.profile_effects) || bad(&p.random_effects) || bad(&p.random_cov) {
                return Some("presence parameters");
            }
        }
        if let Some(imp) = &self.imputed {
            if imp.iter().flatten().any(|v| !v.is_finite()) {
                return Some("imputed outcomes");
            }
        }
        None
    }
}

/// Log class probabilities from a softmax with max-subtraction.
pub fn allocation_log_probs(x0: &DVector<f64>, coef: &DMatrix<f64>) -> Result<Vec<f64>> {
    if coef.ncols() != x0.len() {
        return Err(Error::argument("allocation covariates and coefficients differ in dimension"));
    }
    let lin = coef * x0;
    if lin.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite allocation linear predictor"));
    }
    let m = lin.max();
    let lse = m + lin.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lin.iter().map(|v| v - lse).collect())
}

pub fn allocation_probs(x0: &DVector<f64>, coef: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(allocation_log_probs(x0, coef)?.into_iter().map(f64::exp).collect())
}

/// Normal log-likelihood of `y` over `block`, conditional on the patient's
/// random effects.
pub fn outcome_loglik(block: &RowBlock, y: &DVector<f64>, class: usize, params: &OutcomeParams, random: &DVector<f64>) -> f64 {
    if block.is_empty() {
        return 0.0;
    }
    let s2 = params.noise_var[class];
    let resid = y - params.population_mean(block, class) - &block.random * random;
    let t = block.len() as f64;
    -0.5 * (t * (LN_2PI + s2.ln()) + resid.norm_squared() / s2)
}

/// Precomputed inverse and log-determinant of a random-effect covariance.
#[derive(Debug, Clone)]
pub struct CovFactor {
    pub inverse: DMatrix<f64>,
    pub log_det: f64,
}

impl CovFactor {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_jittered(cov)?;
        Ok(Self { log_det: chol_log_det(&chol), inverse: chol.inverse() })
    }
}

/// Normal log-likelihood of `y` over `block` with the random effects
/// integrated out: covariance `Z Σ Z' + σ² I`, by Woodbury and the
/// determinant lemma.
pub fn outcome_marginal_loglik(block: &RowBlock, y: &DVector<f64>, class: usize, params: &OutcomeParams, cov: &CovFactor) -> Result<f64> {
    if block.is_empty() {
        return Ok(0.0);
    }
    let s2 = params.noise_var[class];
    let u = y - params.population_mean(block, class);
    let zu = block.random.tr_mul(&u);
    let inner = &cov.inverse + &block.random_random / s2;
    let chol = cholesky_jittered(&inner)?;
    let t = block.len() as f64;
    let quad = (u.norm_squared() - zu.dot(&chol.solve(&zu)) / s2) / s2;
    let log_det = t * s2.ln() + cov.log_det + chol_log_det(&chol);
    Ok(-0.5 * (t * LN_2PI + log_det + quad))
}

/// Bernoulli log-likelihood of the presence indicators given the logits.
pub fn bernoulli_logit_loglik(present: &DVector<f64>, logits: &DVector<f64>) -> f64 {
    present.iter().zip(logits.iter()).map(|(r, z)| r * z - log1p_exp(*z)).sum()
}

pub fn presence_loglik(design: &PresenceData, class: usize, params: &PresenceParams, random: &DVector<f64>) -> f64 {
    bernoulli_logit_loglik(&design.present, &params.linear_predictor(design, class, random))
}

/// Gauss-Hermite nodes and weights for `∫ exp(-x²) f(x) dx`, by Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = off;
        jac[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Presence log-likelihood with a scalar random effect integrated against
/// N(0, var) by Gauss-Hermite quadrature.
pub fn presence_marginal_loglik(design: &PresenceData, class: usize, params: &PresenceParams, var: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let base = &design.fixed * &params.fixed_effects + &design.profile * params.profile_effects.row(class).transpose();
    let col = design.random.column(0);
    let scale = (2.0 * var).sqrt();
    let terms: Vec<f64> = rule
        .0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| {
            let e = scale * x;
            let ll: f64 = (0..base.len()).map(|j| {
                let z = base[j] + col[j] * e;
                design.present[j] * z - log1p_exp(z)
            }).sum();
            w.ln() + ll
        })
        .collect();
    log_sum_exp(&terms) - 0.5 * PI.ln()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Unnormalized log class weights for patient `i` from its observed cells,
/// with the outcome random effects integrated out. `cov` factors the
/// random-effect covariance.
pub fn class_log_weights(patient: &PatientData, i: usize, state: &ChainState, mode: Mode, cov: &CovFactor) -> Result<Vec<f64>> {
    let mut w = allocation_log_probs(&patient.allocation_covariates, &state.alloc.coef)?;
    let y = patient.observed_outcome();
    let presence = match mode {
        Mode::Joint => Some((
            patient.presence.as_ref().ok_or_else(|| Error::argument("joint mode without presence design"))?,
            state.presence.as_ref().ok_or_else(|| Error::argument("joint mode without presence parameters"))?,
            state.presence_random_effect(i).unwrap_or_default(),
        )),
        Mode::Marginal => None,
    };
    for (l, wl) in w.iter_mut().enumerate() {
        *wl += outcome_marginal_loglik(&patient.observed, &y, l, &state.outcome, cov)?;
        if let Some((design, params, e)) = &presence {
            *wl += presence_loglik(design, l, params, e);
        }
    }
    if w.iter().any(|v| v.is_nan()) {
        return Err(Error::numerical(format!("NaN class weight for patient {}", patient.id)));
    }
    Ok(w)
}

/// Draw a class label for patient `i` given everything except its random effects.
pub fn draw_class<R: Rng + ?Sized>(patient: &PatientData, i: usize, state: &ChainState, mode: Mode, cov: &CovFactor, rng: &mut R) -> Result<usize> {
    sample_categorical_log(&class_log_weights(patient, i, state, mode, cov)?, rng)
}
