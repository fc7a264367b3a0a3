//! Moments of the Pólya-Gamma sampler and its symmetry in the tilt.

use profimpute::rng::RngStream;
use profimpute::samplers::sample_pg;

use crate::common::{ks_two_sample, mean, Outcome};

const DRAWS: usize = 100_000;
const TILTS: [f64; 4] = [0.0, 0.5, 2.0, 5.0];
const MEAN_TOL: f64 = 0.005;
const P_FLOOR: f64 = 0.001;

fn expected_mean(c: f64) -> f64 {
    if c == 0.0 {
        0.25
    } else {
        (c / 2.0).tanh() / (2.0 * c)
    }
}

fn draws(c: f64, id: u64) -> Vec<f64> {
    let mut rng = RngStream::new(31, id).rng();
    (0..DRAWS).map(|_| sample_pg(c, &mut rng).expect("pg draw")).collect()
}

pub fn run() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &c) in TILTS.iter().enumerate() {
        let pos = draws(c, 2 * k as u64);
        let neg = draws(-c, 2 * k as u64 + 1);
        let m = mean(&pos);
        let gap = (m - expected_mean(c)).abs();
        let (_, p) = ks_two_sample(&pos, &neg);
        let ok = gap <= MEAN_TOL && p > P_FLOOR;
        pass &= ok;
        parts.push(format!("c={c}: mean {m:.5} vs {:.5} (|diff| {gap:.5}), KS p {p:.3}", expected_mean(c)));
    }
    Outcome::new(pass, format!("{DRAWS} draws per tilt; {}; tolerance {MEAN_TOL}, KS floor {P_FLOOR}", parts.join("; ")))
}
