//! Simulation-based calibration: parameters drawn from the prior, data from
//! the model, and the rank of each true value among the posterior draws.

use nalgebra::DVector;
use profimpute::gibbs::{run_chain, FitConfig};
use profimpute::model::{Mode, PriorSpec};
use profimpute::panel::{build_panel, PanelConfig, RawRecord, RawTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::common::{chi_square_uniform, model, Outcome};

const REPS: usize = 100;
const PATIENTS: usize = 200;
const QUARTERS: u32 = 8;
const BINS: usize = 10;
const P_FLOOR: f64 = 0.001;
const NAMES: [&str; 6] = ["fixed intercept", "fixed slope", "noise variance 0", "noise variance 1", "allocation intercept", "allocation slope"];

fn inv_gamma(shape: f64, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / rate).unwrap().sample(rng)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One dataset from the prior. Returns the long table and the true values
/// in the order of `NAMES`.
fn simulate(seed: u64) -> (RawTable, [f64; 6]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = [normal(&mut rng), normal(&mut rng)];
    let slope1 = normal(&mut rng);
    let noise = [inv_gamma(1.0, 1.0, &mut rng), inv_gamma(1.0, 1.0, &mut rng)];
    // Inverse-Wishart(3, 1) in one dimension.
    let random_var = inv_gamma(1.5, 0.5, &mut rng);
    let alloc = [normal(&mut rng), normal(&mut rng)];

    let mut records = Vec::new();
    let mut row = 0;
    for i in 0..PATIENTS {
        let id = format!("s{i:04}");
        let z = normal(&mut rng);
        let lin = alloc[0] + alloc[1] * z;
        let p1 = 1.0 / (1.0 + (-lin).exp());
        let class = usize::from(rng.random::<f64>() < p1);
        let b = random_var.sqrt() * normal(&mut rng);
        let mut push = |quarter: u32, outcome: Option<f64>, x: f64| {
            row += 1;
            records.push(RawRecord { patient_id: id.clone(), quarter, outcome, event: false, day: None, covariates: vec![Some(z), Some(x)], source_row: row });
        };
        for q in 1..=4 {
            push(q, Some(0.0), 0.0);
        }
        let mut observed: Vec<bool> = (0..QUARTERS).map(|_| rng.random::<f64>() >= 0.25).collect();
        if !observed.iter().any(|&o| o) {
            let keep = rng.random_range(0..QUARTERS as usize);
            observed[keep] = true;
        }
        for k in 0..QUARTERS {
            let quarter = 5 + k;
            let x = normal(&mut rng);
            let t = f64::from(quarter) / 4.0;
            let mean = fixed[0] + fixed[1] * x + if class == 1 { slope1 * t } else { 0.0 } + b;
            let y = mean + noise[class].sqrt() * normal(&mut rng);
            push(quarter, observed[k as usize].then_some(y), x);
        }
    }
    let table = RawTable { covariate_names: vec!["z".into(), "x".into()], has_day: false, records };
    (table, [fixed[0], fixed[1], noise[0], noise[1], alloc[0], alloc[1]])
}

/// Rank of the truth among the posterior draws, in `0..=draws`.
fn ranks(seed: u64) -> [usize; 6] {
    let (table, truth) = simulate(seed);
    let panel = build_panel(&table, &PanelConfig { baseline_columns: vec!["z".into()], ..PanelConfig::default() }).expect("panel");
    let spec = model(Mode::Marginal, 2, &["z"], [&["1", "x"], &["time"], &["1"]], [&["1"], &["1"], &["1"]]);
    let (_, data) = spec.build(&panel).expect("model data");
    let prior = PriorSpec::default_for(&data.dims);
    let config = FitConfig { classes: 2, iterations: 3000, burn_in: 1020, thin: 20, seed: 5000 + seed, chain: 0, stored_imputations: 0, ..FitConfig::default() };
    let archive = run_chain(&data, &config, &prior).expect("fit");
    let value = |d: &profimpute::gibbs::RetainedDraw| -> [f64; 6] {
        let a: DVector<f64> = d.alloc.coef.row(1).transpose();
        [d.fixed_effects[0], d.fixed_effects[1], d.noise_var[0], d.noise_var[1], a[0], a[1]]
    };
    let mut out = [0usize; 6];
    for d in &archive.draws {
        let v = value(d);
        for k in 0..6 {
            out[k] += usize::from(v[k] < truth[k]);
        }
    }
    out
}

pub fn run() -> Outcome {
    let all: Vec<[usize; 6]> = (0..REPS as u64).into_par_iter().map(ranks).collect();
    // 99 retained draws give ranks 0..=99, ten per bin.
    let mut worst = (1.0f64, "");
    let mut parts = Vec::new();
    for (k, name) in NAMES.iter().enumerate() {
        let mut counts = [0usize; BINS];
        for r in &all {
            counts[r[k] * BINS / 100] += 1;
        }
        let (_, p) = chi_square_uniform(&counts);
        if p < worst.0 {
            worst = (p, name);
        }
        parts.push(format!("{name} p={p:.3}"));
    }
    Outcome::new(worst.0 > P_FLOOR, format!("{REPS} replications, {BINS} bins; {}; min p = {:.4} ({}), floor {P_FLOOR}", parts.join(", "), worst.0, worst.1))
}
