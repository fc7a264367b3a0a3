//! Dense linear-algebra helpers shared by the samplers and the regressions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Number of diagonal-jitter retries before a factorization is declared failed.
pub const JITTER_ATTEMPTS: usize = 3;
/// Relative size of the first jitter, scaled by the mean diagonal.
pub const JITTER_SCALE: f64 = 1e-10;

/// Cholesky factorization with escalating diagonal jitter.
///
/// Tries the matrix as given, then adds `1e-10 * mean(diag) * 10^k * I` for
/// `k = 0, 1, 2`. The error message carries the diagonal range so that a
/// failing conditional can be traced back to its block.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::argument(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let mean_diag = (m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(f64::MIN_POSITIVE);
    let mut eps = JITTER_SCALE * mean_diag;
    for _ in 0..JITTER_ATTEMPTS {
        let mut j = m.clone();
        for i in 0..m.nrows() {
            j[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
        eps *= 10.0;
    }
    let diag = m.diagonal();
    Err(Error::numerical(format!(
        "matrix of dimension {} is not positive definite after {} jitter attempts (diagonal range [{:.3e}, {:.3e}])",
        m.nrows(),
        JITTER_ATTEMPTS,
        diag.min(),
        diag.max()
    )))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky_jittered(m)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn chol_log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.nrows() == m.ncols() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Stack per-patient row blocks vertically.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Indices of columns that are (numerically) linear combinations of earlier ones.
///
/// Modified Gram-Schmidt on column-centred copies would change the meaning
/// of the intercept, so this works on the raw columns with a relative
/// tolerance.
pub fn dependent_columns(x: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            dropped.push(j);
            continue;
        }
        let mut v = col.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let n = v.norm();
        if n <= tol * norm0 {
            dropped.push(j);
        } else {
            basis.push(v / n);
        }
    }
    dropped
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub std_err: DVector<f64>,
    pub sigma2: f64,
    pub df_resid: usize,
    /// True when the normal equations needed the ridge fallback.
    pub ridged: bool,
}

/// Ordinary least squares via the normal equations; falls back to a tiny
/// ridge penalty when `X'X` is singular.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, ridge_fallback: f64) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::argument(format!("design has {n} rows but response has {}", y.len())));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let (chol, ridged) = match Cholesky::new(xtx.clone()) {
        Some(c) => (c, false),
        None => {
            let mut r = xtx.clone();
            for i in 0..k {
                r[(i, i)] += ridge_fallback;
            }
            let c = Cholesky::new(r).ok_or_else(|| Error::numerical("ridge-penalized normal equations are singular"))?;
            (c, true)
        }
    };
    let coef = chol.solve(&xty);
    let resid = y - x * &coef;
    let df_resid = n.saturating_sub(k);
    let sigma2 = if df_resid > 0 { resid.norm_squared() / df_resid as f64 } else { f64::NAN };
    let inv = chol.inverse();
    let std_err = DVector::from_iterator(k, (0..k).map(|i| (sigma2 * inv[(i, i)]).sqrt()));
    Ok(OlsFit { coef, std_err, sigma2, df_resid, ridged })
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    pub std_err: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Maximum-likelihood logistic regression by iteratively reweighted least squares.
pub fn logistic_irls(x: &DMatrix<f64>, y: &DVector<f64>, max_iter: usize, tol: f64) -> Result<LogisticFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::argument("logistic design and response lengths differ"));
    }
    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::identity(k, k);
    for it in 0..max_iter {
        iterations = it + 1;
        let eta = x * &beta;
        let mut xtwx = DMatrix::zeros(k, k);
        let mut score = DVector::zeros(k);
        for i in 0..n {
            let p = logistic(eta[i]);
            let w = (p * (1.0 - p)).max(1e-12);
            let row = x.row(i);
            for a in 0..k {
                score[a] += row[a] * (y[i] - p);
                for b in 0..=a {
                    xtwx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let chol = cholesky_jittered(&xtwx)?;
        let step = chol.solve(&score);
        beta += &step;
        info = xtwx;
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("logistic IRLS diverged"));
        }
        if step.amax() < tol {
            converged = true;
            break;
        }
    }
    let cov = spd_inverse(&info)?;
    let std_err = DVector::from_iterator(k, (0..k).map(|i| cov[(i, i)].sqrt()));
    Ok(LogisticFit { coef: beta, std_err, converged, iterations })
}
