//! Individual Gibbs updates.
//!
//! Each update redraws one block of [`ChainState`] from its full conditional
//! and draws its randomness from `stream.substream(&[iteration, block, ...])`,
//! so any block can be replayed in isolation against a frozen state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, spd_inverse};
use crate::model::{draw_class, log_sum_exp, CovFactor, ChainState, Mode, ModelData, OutcomeParams, PatientData, PriorSpec};
use crate::rng::RngStream;
use crate::samplers::{sample_invgamma, sample_invwishart, sample_mvn_canonical, sample_pg};

/// Substream tags, one per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Block {
    Init = 0,
    Classes = 1,
    ProfileEffects = 2,
    Allocation = 3,
    FixedEffects = 4,
    RandomEffects = 5,
    NoiseVariances = 6,
    RandomCovariance = 7,
    PresenceAuxiliaries = 8,
    PresenceFixed = 9,
    PresenceProfile = 10,
    PresenceRandom = 11,
    PresenceCovariance = 12,
    Imputation = 13,
    ClassRandomEffects = 14,
    ClassImputation = 15,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Init => "initialization",
            Block::Classes => "class allocation",
            Block::ProfileEffects => "profile effects",
            Block::Allocation => "allocation coefficients",
            Block::FixedEffects => "fixed effects",
            Block::RandomEffects => "random effects",
            Block::NoiseVariances => "noise variances",
            Block::RandomCovariance => "random-effect covariance",
            Block::PresenceAuxiliaries => "presence auxiliaries",
            Block::PresenceFixed => "presence fixed effects",
            Block::PresenceProfile => "presence profile effects",
            Block::PresenceRandom => "presence random effects",
            Block::PresenceCovariance => "presence random-effect covariance",
            Block::Imputation => "imputation",
            Block::ClassRandomEffects => "random effects after class draw",
            Block::ClassImputation => "imputation after class draw",
        }
    }
}

fn key(iteration: u64, block: Block, extra: &[u64]) -> Vec<u64> {
    let mut k = vec![iteration, block as u64];
    k.extend_from_slice(extra);
    k
}

/// Residual of the working outcome after removing the named parts.
fn outcome_residual(data: &ModelData, state: &ChainState, i: usize, fixed: bool, profile: bool, random: bool) -> DVector<f64> {
    let p = &data.patients[i];
    let block = p.active();
    let mut r = p.working_outcome(state.imputed_for(i));
    let c = state.allocation[i];
    if fixed {
        r -= &block.fixed * &state.outcome.fixed_effects;
    }
    if profile {
        r -= &block.profile * state.outcome.profile_effects.row(c).transpose();
    }
    if random {
        r -= &block.random * state.outcome.random_effects.row(i).transpose();
    }
    r
}

/// Class labels with the outcome random effects integrated out. The random
/// effects must be redrawn before anything else conditions on them.
pub fn update_classes(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64) -> Result<()> {
    let cov = CovFactor::new(&state.outcome.random_cov)?;
    let snapshot = &*state;
    let labels = (0..data.patients.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(&key(iteration, Block::Classes, &[i as u64]));
            draw_class(&data.patients[i], i, snapshot, data.mode, &cov, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    state.allocation = labels;
    Ok(())
}

pub fn update_profile_effects(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let q = data.dims.profile;
    let prior_prec = spd_inverse(&prior.profile_cov)?;
    for l in 1..data.dims.classes {
        let s2 = state.outcome.noise_var[l];
        let mut prec = DMatrix::zeros(q, q);
        let mut lin = DVector::zeros(q);
        for (i, p) in data.patients.iter().enumerate() {
            if state.allocation[i] != l {
                continue;
            }
            let block = p.active();
            prec += &block.profile_profile;
            lin += block.profile.tr_mul(&outcome_residual(data, state, i, true, false, true));
        }
        let prec = &prior_prec + prec / s2;
        let lin = lin / s2;
        let mut rng = stream.substream(&key(iteration, Block::ProfileEffects, &[l as u64]));
        let draw = sample_mvn_canonical(&prec, &lin, &mut rng)?;
        state.outcome.profile_effects.set_row(l, &draw.transpose());
    }
    Ok(())
}

/// Pólya-Gamma auxiliaries and coefficients of the allocation model, one
/// class at a time against the others.
pub fn update_allocation(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let d = data.dims.allocation;
    let prior_prec = spd_inverse(&prior.allocation_cov)?;
    for l in 1..data.dims.classes {
        let coef = &state.alloc.coef;
        let parts = data
            .patients
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let x0 = &p.allocation_covariates;
                let lin = coef * x0;
                let others: Vec<f64> = (0..lin.len()).filter(|&k| k != l).map(|k| lin[k]).collect();
                let offset = log_sum_exp(&others);
                let tilt = lin[l] - offset;
                let mut rng = stream.substream(&key(iteration, Block::Allocation, &[l as u64, i as u64]));
                let w = sample_pg(tilt, &mut rng)?;
                let kappa = if state.allocation[i] == l { 0.5 } else { -0.5 };
                Ok((w, kappa + w * offset))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prec = prior_prec.clone();
        let mut lin = &prior_prec * prior.allocation_mean.row(l).transpose();
        for (i, (w, m)) in parts.iter().enumerate() {
            let x0 = &data.patients[i].allocation_covariates;
            prec.ger(*w, x0, x0, 1.0);
            lin.axpy(*m, x0, 1.0);
            state.pg_alloc[(i, l)] = *w;
        }
        let mut rng = stream.substream(&key(iteration, Block::Allocation, &[l as u64, u64::MAX]));
        let draw = sample_mvn_canonical(&prec, &lin, &mut rng)?;
        debug_assert_eq!(draw.len(), d);
        state.alloc.coef.set_row(l, &draw.transpose());
    }
    Ok(())
}

/// Fixed effects with the random effects integrated out.
pub fn update_fixed_effects(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let p_dim = data.dims.fixed;
    let cov_inv = spd_inverse(&state.outcome.random_cov)?;
    let snapshot = &*state;
    let parts = data
        .patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let block = p.active();
            let s2 = snapshot.outcome.noise_var[snapshot.allocation[i]];
            let u = outcome_residual(data, snapshot, i, false, true, false);
            let du = block.fixed.tr_mul(&u);
            let zu = block.random.tr_mul(&u);
            let inner = &cov_inv * s2 + &block.random_random;
            let chol = cholesky_jittered(&inner)?;
            let zd = block.fixed_random.transpose();
            let prec = (&block.fixed_fixed - &block.fixed_random * chol.solve(&zd)) / s2;
            let lin = (du - &block.fixed_random * chol.solve(&zu)) / s2;
            Ok((prec, lin))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut prec = spd_inverse(&prior.fixed_cov)?;
    let mut lin = DVector::zeros(p_dim);
    for (a, b) in parts {
        prec += a;
        lin += b;
    }
    let mut rng = stream.substream(&key(iteration, Block::FixedEffects, &[]));
    state.outcome.fixed_effects = sample_mvn_canonical(&prec, &lin, &mut rng)?;
    Ok(())
}

pub fn update_random_effects(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64) -> Result<()> {
    draw_random_effects(state, data, stream, iteration, Block::RandomEffects, false)
}

/// Random effects given the class. With `observed_only` the draw conditions
/// on the observed cells alone, which in joint mode lets it form one block
/// with the class draw and the imputations that follow.
fn draw_random_effects(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64, tag: Block, observed_only: bool) -> Result<()> {
    let cov_inv = spd_inverse(&state.outcome.random_cov)?;
    let snapshot = &*state;
    let rows = data
        .patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let c = snapshot.allocation[i];
            let s2 = snapshot.outcome.noise_var[c];
            let (block, u) = if observed_only {
                (&p.observed, p.observed_outcome() - snapshot.outcome.population_mean(&p.observed, c))
            } else {
                (p.active(), outcome_residual(data, snapshot, i, true, true, false))
            };
            let prec = &cov_inv + &block.random_random / s2;
            let lin = block.random.tr_mul(&u) / s2;
            let mut rng = stream.substream(&key(iteration, tag, &[i as u64]));
            sample_mvn_canonical(&prec, &lin, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, b) in rows.into_iter().enumerate() {
        state.outcome.random_effects.set_row(i, &b.transpose());
    }
    Ok(())
}

/// Per-class noise variances. The count is over the active rows: observed
/// cells in marginal mode, every follow-up quarter in joint mode.
pub fn update_noise_variances(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let classes = data.dims.classes;
    let mut count = vec![0usize; classes];
    let mut ss = vec![0.0; classes];
    for (i, p) in data.patients.iter().enumerate() {
        let c = state.allocation[i];
        count[c] += p.active().len();
        ss[c] += outcome_residual(data, state, i, true, true, true).norm_squared();
    }
    for l in 0..classes {
        let mut rng = stream.substream(&key(iteration, Block::NoiseVariances, &[l as u64]));
        state.outcome.noise_var[l] =
            sample_invgamma(prior.noise_shape + count[l] as f64 / 2.0, prior.noise_rate + ss[l] / 2.0, &mut rng)?;
    }
    Ok(())
}

fn scatter(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.tr_mul(m)
}

pub fn update_random_covariance(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let scale = scatter(&state.outcome.random_effects) + &prior.random_scale;
    let mut rng = stream.substream(&key(iteration, Block::RandomCovariance, &[]));
    state.outcome.random_cov = sample_invwishart(data.patients.len() as f64 + prior.random_dof, &scale, &mut rng)?;
    Ok(())
}

fn presence_parts(data: &ModelData, state: &ChainState, i: usize) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let design = data.patients[i].presence.as_ref().ok_or_else(|| Error::argument("presence block called without presence design"))?;
    let params = state.presence.as_ref().ok_or_else(|| Error::argument("presence block called without presence parameters"))?;
    let c = state.allocation[i];
    let fixed = &design.fixed * &params.fixed_effects;
    let profile = &design.profile * params.profile_effects.row(c).transpose();
    let random = &design.random * params.random_effects.row(i).transpose();
    Ok((fixed, profile, random))
}

pub fn update_presence_auxiliaries(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64) -> Result<()> {
    let snapshot = &*state;
    let aux = (0..data.patients.len())
        .into_par_iter()
        .map(|i| {
            let (f, p, r) = presence_parts(data, snapshot, i)?;
            let mut rng = stream.substream(&key(iteration, Block::PresenceAuxiliaries, &[i as u64]));
            (f + p + r).iter().map(|z| sample_pg(*z, &mut rng)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    state.pg_presence = aux;
    Ok(())
}

fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (j, wj) in w.iter().enumerate() {
        xw.row_mut(j).scale_mut(*wj);
    }
    x.tr_mul(&xw)
}

/// `kappa - w ∘ offset` with `kappa = R - 1/2`.
fn working_response(present: &DVector<f64>, w: &[f64], offset: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(present.len(), (0..present.len()).map(|j| present[j] - 0.5 - w[j] * offset[j]))
}

fn presence_prior(m: &Option<DMatrix<f64>>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(m.as_ref().ok_or_else(|| Error::config(format!("joint mode needs a prior {what}")))?)
}

pub fn update_presence_fixed(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let mut prec = presence_prior(&prior.presence_fixed_cov, "presence fixed-effect covariance")?;
    let mut lin = DVector::zeros(prec.nrows());
    for (i, p) in data.patients.iter().enumerate() {
        let design = p.presence.as_ref().expect("checked in presence_parts");
        let (_, profile, random) = presence_parts(data, state, i)?;
        let w = &state.pg_presence[i];
        prec += weighted_gram(&design.fixed, w);
        lin += design.fixed.tr_mul(&working_response(&design.present, w, &(profile + random)));
    }
    let mut rng = stream.substream(&key(iteration, Block::PresenceFixed, &[]));
    let draw = sample_mvn_canonical(&prec, &lin, &mut rng)?;
    state.presence.as_mut().expect("checked above").fixed_effects = draw;
    Ok(())
}

pub fn update_presence_profile(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let prior_prec = presence_prior(&prior.presence_profile_cov, "presence profile-effect covariance")?;
    for l in 1..data.dims.classes {
        let mut prec = prior_prec.clone();
        let mut lin = DVector::zeros(prec.nrows());
        for (i, p) in data.patients.iter().enumerate() {
            if state.allocation[i] != l {
                continue;
            }
            let design = p.presence.as_ref().ok_or_else(|| Error::argument("missing presence design"))?;
            let (fixed, _, random) = presence_parts(data, state, i)?;
            let w = &state.pg_presence[i];
            prec += weighted_gram(&design.profile, w);
            lin += design.profile.tr_mul(&working_response(&design.present, w, &(fixed + random)));
        }
        let mut rng = stream.substream(&key(iteration, Block::PresenceProfile, &[l as u64]));
        let draw = sample_mvn_canonical(&prec, &lin, &mut rng)?;
        state.presence.as_mut().ok_or_else(|| Error::argument("missing presence parameters"))?.profile_effects.set_row(l, &draw.transpose());
    }
    Ok(())
}

pub fn update_presence_random(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64) -> Result<()> {
    let params = state.presence.as_ref().ok_or_else(|| Error::argument("missing presence parameters"))?;
    let cov_inv = spd_inverse(&params.random_cov)?;
    let snapshot = &*state;
    let rows = data
        .patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let design = p.presence.as_ref().ok_or_else(|| Error::argument("missing presence design"))?;
            let (fixed, profile, _) = presence_parts(data, snapshot, i)?;
            let w = &snapshot.pg_presence[i];
            let prec = &cov_inv + weighted_gram(&design.random, w);
            let lin = design.random.tr_mul(&working_response(&design.present, w, &(fixed + profile)));
            let mut rng = stream.substream(&key(iteration, Block::PresenceRandom, &[i as u64]));
            sample_mvn_canonical(&prec, &lin, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let params = state.presence.as_mut().expect("checked above");
    for (i, e) in rows.into_iter().enumerate() {
        params.random_effects.set_row(i, &e.transpose());
    }
    Ok(())
}

pub fn update_presence_covariance(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64) -> Result<()> {
    let params = state.presence.as_mut().ok_or_else(|| Error::argument("missing presence parameters"))?;
    let base = prior.presence_random_scale.as_ref().ok_or_else(|| Error::config("joint mode needs a prior presence random-effect scale"))?;
    let scale = scatter(&params.random_effects) + base;
    let mut rng = stream.substream(&key(iteration, Block::PresenceCovariance, &[]));
    params.random_cov = sample_invwishart(data.patients.len() as f64 + prior.presence_random_dof, &scale, &mut rng)?;
    Ok(())
}

/// Draw every missing cell from the outcome model given the current class,
/// random effects and coefficients. The presence indicators play no part.
pub fn update_imputations(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64) -> Result<()> {
    draw_imputations(state, data, stream, iteration, Block::Imputation)
}

fn draw_imputations(state: &mut ChainState, data: &ModelData, stream: &RngStream, iteration: u64, tag: Block) -> Result<()> {
    let snapshot = &*state;
    let draws = data
        .patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream.substream(&key(iteration, tag, &[i as u64]));
            let c = snapshot.allocation[i];
            draw_missing(p, &snapshot.outcome, c, &snapshot.random_effect(i), &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    state.imputed = Some(draws);
    Ok(())
}

/// Draws for the missing cells of one patient in class `c` with random effects `b`.
pub fn draw_missing<R: Rng + ?Sized>(p: &PatientData, o: &OutcomeParams, c: usize, b: &DVector<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let sd = o.noise_var[c].sqrt();
    p.missing_rows
        .iter()
        .map(|&j| {
            let mean = (p.design.fixed.row(j) * &o.fixed_effects)[0]
                + (p.design.profile.row(j) * o.profile_effects.row(c).transpose())[0]
                + (p.design.random.row(j) * b)[0];
            let z: f64 = StandardNormal.sample(rng);
            Ok(mean + sd * z)
        })
        .collect()
}

/// Which parameter groups a sweep should leave untouched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrozenBlocks {
    pub presence_profile: bool,
}

/// One full sweep in the sampler's block order.
///
/// The classes are drawn from the observed cells with the random effects
/// integrated out; the random effects (and in joint mode the missing cells)
/// are redrawn right after them. The fixed effects are likewise drawn with
/// the random effects integrated out and followed by a random-effect draw.
pub fn sweep(state: &mut ChainState, data: &ModelData, prior: &PriorSpec, stream: &RngStream, iteration: u64, frozen: FrozenBlocks) -> Result<()> {
    // Attach the iteration and block to numerical failures and catch
    // non-finite values as soon as the offending block has run.
    let tag = |state: &ChainState, block: Block, r: Result<()>| -> Result<()> {
        match r {
            Err(Error::Numerical(msg)) => Err(Error::Numerical(format!("iteration {iteration}, {}: {msg}", block.name()))),
            Err(e) => Err(e),
            Ok(()) if state.first_non_finite().is_some() => Err(Error::NonFinite { iteration: iteration as usize, block: block.name().to_string() }),
            Ok(()) => Ok(()),
        }
    };
    let r = update_classes(state, data, stream, iteration);
    tag(state, Block::Classes, r)?;
    let r = draw_random_effects(state, data, stream, iteration, Block::ClassRandomEffects, true);
    tag(state, Block::ClassRandomEffects, r)?;
    if data.mode == Mode::Joint {
        let r = draw_imputations(state, data, stream, iteration, Block::ClassImputation);
        tag(state, Block::ClassImputation, r)?;
    }
    let r = update_profile_effects(state, data, prior, stream, iteration);
    tag(state, Block::ProfileEffects, r)?;
    let r = update_allocation(state, data, prior, stream, iteration);
    tag(state, Block::Allocation, r)?;
    let r = update_fixed_effects(state, data, prior, stream, iteration);
    tag(state, Block::FixedEffects, r)?;
    let r = update_random_effects(state, data, stream, iteration);
    tag(state, Block::RandomEffects, r)?;
    let r = update_noise_variances(state, data, prior, stream, iteration);
    tag(state, Block::NoiseVariances, r)?;
    let r = update_random_covariance(state, data, prior, stream, iteration);
    tag(state, Block::RandomCovariance, r)?;
    if data.mode == Mode::Joint {
        let r = update_presence_auxiliaries(state, data, stream, iteration);
        tag(state, Block::PresenceAuxiliaries, r)?;
        let r = update_presence_fixed(state, data, prior, stream, iteration);
        tag(state, Block::PresenceFixed, r)?;
        if !frozen.presence_profile {
            let r = update_presence_profile(state, data, prior, stream, iteration);
            tag(state, Block::PresenceProfile, r)?;
        }
        let r = update_presence_random(state, data, stream, iteration);
        tag(state, Block::PresenceRandom, r)?;
        let r = update_presence_covariance(state, data, prior, stream, iteration);
        tag(state, Block::PresenceCovariance, r)?;
        let r = update_imputations(state, data, stream, iteration);
        tag(state, Block::Imputation, r)?;
    }
    Ok(())
}
