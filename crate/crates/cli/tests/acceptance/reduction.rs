//! On fully observed data with the class-specific presence effects held at
//! zero, every outcome block of the joint sampler draws from the same
//! conditional as its marginal counterpart.

use nalgebra::DMatrix;
use profimpute::gibbs::blocks::{
    update_allocation, update_classes, update_fixed_effects, update_noise_variances, update_profile_effects, update_random_covariance,
    update_random_effects,
};
use profimpute::gibbs::{init_state, sweep, FrozenBlocks};
use profimpute::model::{ChainState, Mode, ModelData, PriorSpec};
use profimpute::rng::RngStream;
use profimpute::synth::{generate, Mechanism};
use profimpute::Result;

use crate::common::{mean, preset_model, preset_with_classes, variance, Checks, Outcome};

const REDRAWS: usize = 10_000;
const LIMIT: f64 = 4.0;

type Block = fn(&mut ChainState, &ModelData, &PriorSpec, &RngStream, u64) -> Result<()>;

fn flatten(s: &ChainState) -> Vec<(String, f64)> {
    let o = &s.outcome;
    let mut v = Vec::new();
    let mut push = |name: &str, m: &DMatrix<f64>| {
        for (k, x) in m.iter().enumerate() {
            v.push((format!("{name}[{k}]"), *x));
        }
    };
    push("allocation coefficients", &s.alloc.coef);
    push("fixed effects", &DMatrix::from_column_slice(o.fixed_effects.len(), 1, o.fixed_effects.as_slice()));
    push("profile effects", &o.profile_effects);
    push("noise variances", &DMatrix::from_column_slice(o.noise_var.len(), 1, o.noise_var.as_slice()));
    push("random covariance", &o.random_cov);
    push("random effects", &o.random_effects);
    for (i, c) in s.allocation.iter().enumerate() {
        for l in 0..s.alloc.coef.nrows() {
            v.push((format!("patient {i} in class {l}"), f64::from(u8::from(*c == l))));
        }
    }
    v
}

fn redraw(state: &ChainState, data: &ModelData, prior: &PriorSpec, block: Block, stream: &RngStream) -> Vec<Vec<(String, f64)>> {
    (0..REDRAWS)
        .map(|k| {
            let mut s = state.clone();
            block(&mut s, data, prior, stream, 1 + k as u64).expect("block");
            flatten(&s)
        })
        .collect()
}

/// Two-sample comparison of every coordinate that the block changed.
fn compare(checks: &mut Checks, label: &str, a: &[Vec<(String, f64)>], b: &[Vec<(String, f64)>]) {
    let n = a.len() as f64;
    for k in 0..a[0].len() {
        let xa: Vec<f64> = a.iter().map(|d| d[k].1).collect();
        let xb: Vec<f64> = b.iter().map(|d| d[k].1).collect();
        let (va, vb) = (variance(&xa), variance(&xb));
        if va == 0.0 && vb == 0.0 {
            // Untouched by the block: both samplers must agree exactly.
            checks.z(&format!("{label}: {}", a[0][k].0), xa[0], xb[0], 0.0);
            continue;
        }
        let name = format!("{label}: {}", a[0][k].0);
        checks.z(&format!("{name} mean"), mean(&xa), mean(&xb), ((va + vb) / n).sqrt());
        let sq = |x: &[f64]| -> Vec<f64> {
            let m = mean(x);
            x.iter().map(|v| (v - m) * (v - m)).collect()
        };
        let (sa, sb) = (sq(&xa), sq(&xb));
        checks.z(&format!("{name} var"), va, vb, ((variance(&sa) + variance(&sb)) / n).sqrt());
    }
}

pub fn run() -> Outcome {
    let mut g = preset_with_classes(2, 606);
    g.patients = 30;
    g.min_followup = 3;
    g.max_followup = 6;
    g.mechanism = Mechanism::Mcar { missing: 0.0 };
    let (panel, _) = generate(&g).expect("generate");
    let (_, marginal) = preset_model(Mode::Marginal, 2).build(&panel).expect("marginal data");
    let (_, joint) = preset_model(Mode::Joint, 2).build(&panel).expect("joint data");
    let prior_m = PriorSpec::default_for(&marginal.dims);
    let prior_j = PriorSpec::default_for(&joint.dims);

    let stream = RngStream::new(8, 0);
    let mut state_m = init_state(&marginal, &stream).expect("init");
    for t in 1..=30 {
        sweep(&mut state_m, &marginal, &prior_m, &stream, t, FrozenBlocks::default()).expect("sweep");
    }
    let mut state_j = init_state(&joint, &stream).expect("init");
    {
        let presence = state_j.presence.as_mut().expect("joint state");
        presence.profile_effects.fill(0.0);
    }
    state_j.allocation = state_m.allocation.clone();
    state_j.alloc = state_m.alloc.clone();
    state_j.outcome = state_m.outcome.clone();
    state_j.pg_alloc = state_m.pg_alloc.clone();

    let blocks: [(&str, Block); 7] = [
        ("classes", |s, d, _, r, t| update_classes(s, d, r, t)),
        ("profile effects", update_profile_effects),
        ("allocation", update_allocation),
        ("fixed effects", update_fixed_effects),
        ("random effects", |s, d, _, r, t| update_random_effects(s, d, r, t)),
        ("noise variances", update_noise_variances),
        ("random covariance", update_random_covariance),
    ];
    let mut checks = Checks::new(LIMIT);
    for (name, block) in blocks {
        let a = redraw(&state_m, &marginal, &prior_m, block, &RngStream::new(21, 1));
        let b = redraw(&state_j, &joint, &prior_j, block, &RngStream::new(21, 2));
        compare(&mut checks, name, &a, &b);
    }

    // The presence effects must stay exactly zero through full joint sweeps.
    let mut s = state_j.clone();
    let frozen = FrozenBlocks { presence_profile: true };
    for t in 1..=20 {
        sweep(&mut s, &joint, &prior_j, &stream, t, frozen).expect("joint sweep");
    }
    let held = s.presence.as_ref().map(|p| p.profile_effects.iter().all(|x| *x == 0.0)).unwrap_or(false);
    Outcome::new(
        checks.passed() && held,
        format!("{REDRAWS} redraws per block and sampler; {}; presence profile effects held at zero: {held}", checks.summary()),
    )
}
