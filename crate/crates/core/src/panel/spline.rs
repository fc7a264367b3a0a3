//! Clamped B-spline bases over time.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPlacement {
    /// Interior knots at these quantiles of the pooled observed times;
    /// boundary knots at the pooled minimum and maximum.
    Quantiles(Vec<f64>),
    Explicit { interior: Vec<f64>, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasisSpec {
    pub knots: KnotPlacement,
    pub degree: usize,
    /// When false the first basis function is dropped; the intercept then
    /// lives in the fixed-effects design.
    pub include_intercept: bool,
}

impl Default for SplineBasisSpec {
    fn default() -> Self {
        Self {
            knots: KnotPlacement::Quantiles(vec![0.01, 0.15, 0.20, 0.50, 0.75, 0.90]),
            degree: 3,
            include_intercept: false,
        }
    }
}

/// A basis with its knots resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub interior: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub degree: usize,
    pub include_intercept: bool,
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SplineBasisSpec {
    pub fn validate(&self) -> Result<()> {
        if let KnotPlacement::Quantiles(q) = &self.knots {
            if q.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::config("knot quantiles must lie in (0, 1)"));
            }
            if q.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("knot quantiles must be strictly increasing"));
            }
        }
        if let KnotPlacement::Explicit { interior, lower, upper } = &self.knots {
            if !(lower < upper) {
                return Err(Error::config("spline boundary knots must satisfy lower < upper"));
            }
            if interior.windows(2).any(|w| w[0] > w[1]) || interior.iter().any(|k| k < lower || k > upper) {
                return Err(Error::config("explicit interior knots must be sorted and inside the boundary"));
            }
        }
        Ok(())
    }

    fn n_interior(&self) -> usize {
        match &self.knots {
            KnotPlacement::Quantiles(q) => q.len(),
            KnotPlacement::Explicit { interior, .. } => interior.len(),
        }
    }

    /// Resolve knots from the pooled observed times.
    pub fn resolve(&self, pooled_times: &[f64]) -> Result<SplineBasis> {
        self.validate()?;
        let (interior, lower, upper) = match &self.knots {
            KnotPlacement::Explicit { interior, lower, upper } => (interior.clone(), *lower, *upper),
            KnotPlacement::Quantiles(q) => {
                let mut sorted: Vec<f64> = pooled_times.iter().copied().filter(|t| t.is_finite()).collect();
                sorted.sort_by(|a, b| a.total_cmp(b));
                let mut distinct = sorted.clone();
                distinct.dedup();
                let needed = self.degree + 1 + self.n_interior();
                if distinct.len() < needed {
                    return Err(Error::config(format!(
                        "spline basis needs at least {needed} distinct observed times, found {}",
                        distinct.len()
                    )));
                }
                let interior = q.iter().map(|&p| quantile_type7(&sorted, p)).collect();
                (interior, sorted[0], *sorted.last().unwrap())
            }
        };
        Ok(SplineBasis { interior, lower, upper, degree: self.degree, include_intercept: self.include_intercept })
    }
}

impl SplineBasis {
    pub fn n_full(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    pub fn ncols(&self) -> usize {
        self.n_full() - usize::from(!self.include_intercept)
    }

    fn knot_vector(&self) -> Vec<f64> {
        let mut k = vec![self.lower; self.degree + 1];
        k.extend(self.interior.iter().copied());
        k.extend(std::iter::repeat_n(self.upper, self.degree + 1));
        k
    }

    /// All `n_full` basis values at `t`, clamped to the boundary.
    pub fn eval_full(&self, t: f64) -> Vec<f64> {
        let knots = self.knot_vector();
        let p = self.degree;
        let n = self.n_full();
        let t = t.clamp(self.lower, self.upper);
        // Span k with knots[k] <= t < knots[k+1] and a non-empty interval;
        // the right boundary belongs to the last non-empty span.
        let mut span = p;
        for k in p..n {
            if knots[k] < knots[k + 1] && t >= knots[k] {
                span = k;
            }
        }
        let mut out = vec![0.0; n];
        let mut vals = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        vals[0] = 1.0;
        for j in 1..=p {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        for (j, v) in vals.into_iter().enumerate() {
            out[span - p + j] = v;
        }
        out
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut full = self.eval_full(t);
        if !self.include_intercept {
            full.remove(0);
        }
        full
    }

    pub fn matrix(&self, times: &[f64]) -> DMatrix<f64> {
        let k = self.ncols();
        let mut m = DMatrix::zeros(times.len(), k);
        for (i, &t) in times.iter().enumerate() {
            for (j, v) in self.eval(t).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// B-spline basis of `times` with knots resolved from `pooled_times`.
pub fn spline_basis(times: &[f64], spec: &SplineBasisSpec, pooled_times: &[f64]) -> Result<DMatrix<f64>> {
    Ok(spec.resolve(pooled_times)?.matrix(times))
}
