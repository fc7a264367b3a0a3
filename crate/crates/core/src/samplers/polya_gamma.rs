//! Exact sampler for PG(1, c).
//!
//! Devroye's alternating-series accept/reject scheme for the Jacobi
//! distribution J*(1, z), with the proposal split at `t = 0.64` into a
//! truncated inverse-Gaussian piece on `(0, t]` and an exponential tail on
//! `(t, inf)`. `PG(1, c) = J*(1, c/2) / 4`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;

/// One Pólya-Gamma auxiliary together with the tilt it was drawn under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgAuxiliary {
    pub value: f64,
    pub tilt: f64,
}

impl PgAuxiliary {
    pub fn draw<R: Rng + ?Sized>(tilt: f64, rng: &mut R) -> Result<Self> {
        Ok(Self { value: sample_pg(tilt, rng)?, tilt })
    }
}

/// Analytic mean of PG(1, c): `tanh(c/2) / (2c)`, with limit 1/4 at zero.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

fn log_norm_cdf(x: f64) -> f64 {
    let v = 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Probability of proposing from the exponential tail.
fn tail_mass(z: f64) -> f64 {
    let t = TRUNC;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// n-th coefficient of the alternating series for the J*(1) density.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Inverse-Gaussian(1/z, 1) truncated to `(0, t]`.
fn truncated_inv_gauss<R: Rng + ?Sized>(z: f64, t: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > t {
        loop {
            let (mut e1, mut e2): (f64, f64);
            loop {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break;
                }
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// Draw from PG(1, c).
pub fn sample_pg<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::argument(format!("Pólya-Gamma tilt must be finite, got {c}")));
    }
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_tail = tail_mass(z);
    loop {
        let x = if rng.random::<f64>() < p_tail {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inv_gauss(z, TRUNC, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return Ok(0.25 * x);
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}
