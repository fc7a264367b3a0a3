//! Random-variate kernels used by the Gibbs blocks.
//!
//! All kernels take the generator by `&mut` and are otherwise pure. Matrix
//! kernels go through [`cholesky_jittered`](crate::linalg::cholesky_jittered).

mod polya_gamma;

pub use polya_gamma::{pg_mean, sample_pg, PgAuxiliary};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, spd_inverse, symmetrize};

fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draw from N(mean, covariance).
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, covariance: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
        return Err(Error::argument("mean and covariance dimensions differ"));
    }
    let chol = cholesky_jittered(covariance)?;
    let z = std_normal_vec(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Draw from the Gaussian with precision `Q` and mean `Q^{-1} h`.
///
/// This is the canonical form every conjugate normal block produces, and
/// avoids forming the posterior covariance explicitly.
pub fn sample_mvn_canonical<R: Rng + ?Sized>(precision: &DMatrix<f64>, linear: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if precision.nrows() != linear.len() {
        return Err(Error::argument("precision and linear term dimensions differ"));
    }
    let chol = cholesky_jittered(precision)?;
    let mean = chol.solve(linear);
    let z = std_normal_vec(linear.len(), rng);
    // x = mean + L^{-T} z  has covariance (L L^T)^{-1}.
    let lt = chol.l().transpose();
    let dev = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::numerical("triangular solve failed in canonical normal draw"))?;
    Ok(mean + dev)
}

/// Draw from IG(shape, rate): density proportional to `x^{-(a+1)} exp(-b/x)`.
pub fn sample_invgamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::argument(format!("inverse-gamma needs positive shape and rate, got ({shape}, {rate})")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::argument(e.to_string()))?;
    let x: f64 = g.sample(rng);
    Ok(1.0 / x.max(f64::MIN_POSITIVE))
}

/// Draw from IW(dof, scale), mean `scale / (dof - dim - 1)`.
///
/// Bartlett decomposition of the Wishart(dof, scale^{-1}) precision, then
/// inverted through its triangular factor.
pub fn sample_invwishart<R: Rng + ?Sized>(dof: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if scale.ncols() != p || p == 0 {
        return Err(Error::argument("inverse-Wishart scale must be a non-empty square matrix"));
    }
    if !(dof > p as f64 - 1.0) || !dof.is_finite() {
        return Err(Error::argument(format!("inverse-Wishart dof {dof} must exceed dim - 1 = {}", p - 1)));
    }
    let prec_scale = spd_inverse(scale)?;
    let l = cholesky_jittered(&prec_scale)?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| Error::argument(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let m = l * a;
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::numerical("singular Bartlett factor in inverse-Wishart draw"))?;
    let mut out = m_inv.transpose() * m_inv;
    symmetrize(&mut out);
    Ok(out)
}

/// Index `l` with probability `w_l / sum(w)`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::argument("categorical weights are empty"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::argument(format!("categorical weights must be finite and nonnegative: {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::argument("categorical weights sum to zero"));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

/// Categorical draw from unnormalized log weights (max-subtracted).
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if log_weights.iter().any(|v| v.is_nan()) {
        return Err(Error::numerical(format!("NaN in class log-weights: {log_weights:?}")));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numerical(format!("class log-weights have no finite maximum: {log_weights:?}")));
    }
    let w: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    sample_categorical(&w, rng)
}
