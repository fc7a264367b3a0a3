//! Masked cells of a fully observed cohort: interval coverage of the
//! imputations, and the downstream event model against the complete-case fit.

use profimpute::analysis::{cca_analysis, fit_event_model, pool, GeeFit, WorkingCorrelation};
use profimpute::gibbs::{extract_imputations_joint, impute_marginal, run_chain, run_joint_chain, CompletedDataset, FitConfig};
use profimpute::model::{Mode, ModelData, PriorSpec};
use profimpute::panel::Panel;
use profimpute::rng::RngStream;
use profimpute::synth::{generate, mask_panel, GeneratorConfig, GroundTruth, Mechanism};

use crate::common::{preset_model, quantile, Outcome};

const M: usize = 100;
const COVERAGE: (f64, f64) = (0.92, 0.98);
const CLOSER_NEEDED: usize = 5;

fn cohort(seed: u64, patients: usize) -> GeneratorConfig {
    GeneratorConfig { patients, min_followup: 12, max_followup: 24, mechanism: Mechanism::Mcar { missing: 0.0 }, ..GeneratorConfig::preset(seed) }
}

/// Share of masked cells whose true value lies inside the central 95% of
/// its imputations.
fn coverage(masked: &Panel, truth: &GroundTruth, completed: &[CompletedDataset]) -> (f64, usize) {
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, p) in masked.patients.iter().enumerate() {
        for (j, r) in p.followup.iter().enumerate() {
            if r.outcome.is_some() {
                continue;
            }
            let mut v: Vec<f64> = completed.iter().map(|c| c.outcomes[i][j]).collect();
            v.sort_by(f64::total_cmp);
            let y = truth.outcomes[i][j];
            hit += usize::from(quantile(&v, 0.025) <= y && y <= quantile(&v, 0.975));
            total += 1;
        }
    }
    (hit as f64 / total as f64, total)
}

fn missing_share(p: &Panel) -> f64 {
    let s = p.summary();
    s.missing_cells as f64 / s.followup_rows as f64
}

fn build(mode: Mode, panel: &Panel) -> ModelData {
    preset_model(mode, 3).build(panel).expect("model data").1
}

fn config(seed: u64, mode: Mode) -> FitConfig {
    let stored = if mode == Mode::Joint { M } else { 0 };
    FitConfig { classes: 3, iterations: 3000, burn_in: 1000, thin: 2, seed, chain: 0, stored_imputations: stored, ..FitConfig::default() }
}

fn mcar() -> (bool, String) {
    let (full, truth) = generate(&cohort(701, 400)).expect("generate");
    let masked = mask_panel(&full, &truth, &Mechanism::Mcar { missing: 0.2 }, 7).expect("mask");
    let data = build(Mode::Marginal, &masked);
    let archive = run_chain(&data, &config(71, Mode::Marginal), &PriorSpec::default_for(&data.dims)).expect("fit");
    let completed = impute_marginal(&archive, &data, M, &RngStream::new(72, 0)).expect("impute");
    let (cov, cells) = coverage(&masked, &truth, &completed);
    let ok = COVERAGE.0 <= cov && cov <= COVERAGE.1;
    (ok, format!("(a) MCAR, marginal: {:.1}% masked, coverage {cov:.4} over {cells} cells", 100.0 * missing_share(&masked)))
}

fn closer(pooled: &[profimpute::analysis::PooledEstimate], cca: &GeeFit, truth: &GeeFit) -> (usize, usize, Vec<String>) {
    let (mut n, mut total) = (0, 0);
    let mut parts = Vec::new();
    for (k, name) in truth.names.iter().enumerate() {
        if !name.starts_with("a1c") {
            continue;
        }
        let t = truth.coef[k];
        let p = pooled.iter().find(|e| &e.term == name).map(|e| e.estimate).unwrap_or(f64::NAN);
        let c = cca.position(name).map(|j| cca.coef[j]).unwrap_or(f64::NAN);
        total += 1;
        n += usize::from((p - t).abs() < (c - t).abs());
        parts.push(format!("{name}: truth {t:.5} pooled {p:.5} cca {c:.5}"));
    }
    (n, total, parts)
}

fn latent() -> (bool, String) {
    // Profiles that overlap across outcome bands, event risk driven mostly by
    // membership of the rising profile, and that profile measured about half
    // as often as the others.
    let mut g = cohort(702, 2000);
    g.random_var = 0.3;
    g.events.class_effects = vec![0.0, 1.5, 0.0];
    for e in g.events.category_effects.iter_mut() {
        *e *= 0.3;
    }
    let (full, truth) = generate(&g).expect("generate");
    let mechanism = Mechanism::Latent { intercept: 2.4, visits: 0.3, class_intercepts: vec![0.0, -2.5, 0.5], random_var: 0.25 };
    let masked = mask_panel(&full, &truth, &mechanism, 8).expect("mask");
    let data = build(Mode::Joint, &masked);
    let archive = run_joint_chain(&data, &config(81, Mode::Joint), &PriorSpec::default_for(&data.dims)).expect("fit");
    let completed = extract_imputations_joint(&archive, &data, M).expect("imputations");
    let (cov, cells) = coverage(&masked, &truth, &completed);
    let mut ok = COVERAGE.0 <= cov && cov <= COVERAGE.1;

    let corr = WorkingCorrelation::Exchangeable;
    let truth_fit = cca_analysis(&full, &[], corr).expect("full-data fit");
    let cca = cca_analysis(&masked, &[], corr).expect("complete-case fit");
    let fits: Vec<GeeFit> = completed.iter().map(|c| fit_event_model(&masked, &c.outcomes, &[], corr).expect("event model")).collect();
    let pooled = pool(&fits).expect("pooling");
    let (n, total, parts) = closer(&pooled, &cca, &truth_fit);
    ok &= total == 6 && n >= CLOSER_NEEDED;
    (
        ok,
        format!(
            "(b) latent, joint: {:.1}% masked, coverage {cov:.4} over {cells} cells, pooled closer than CCA for {n} of {total} categories (need {CLOSER_NEEDED}) [{}]",
            100.0 * missing_share(&masked),
            parts.join(", ")
        ),
    )
}

pub fn run() -> Outcome {
    let (a_ok, a) = mcar();
    let (b_ok, b) = latent();
    Outcome::new(a_ok && b_ok, format!("{a}; {b}; coverage band [{}, {}], M = {M}", COVERAGE.0, COVERAGE.1))
}
