//! Posterior predictive checks on data from the fitted family, and the
//! two-sided probability on hand-counted cases.

use profimpute::diagnostics::{ppp, ppp_suite, ReplicateMode};
use profimpute::gibbs::{run_chain, FitConfig};
use profimpute::model::{Mode, PriorSpec};
use profimpute::rng::RngStream;
use profimpute::synth::{generate, GeneratorConfig};

use crate::common::{preset_model, Outcome};

const REPLICATES: usize = 500;
const BAND: (f64, f64) = (0.02, 0.10);

fn unit_cases() -> (bool, String) {
    let fifty: Vec<f64> = (0..50).map(f64::from).collect();
    let cases = [
        ("observed beyond every replicate", ppp(10.0, &[1.0, 2.0, 3.0]), 0.0),
        ("observed at the median", ppp(2.5, &[1.0, 2.0, 3.0, 4.0]), 1.0),
        ("one of fifty above", ppp(48.5, &fifty), 0.04),
    ];
    let ok = cases.iter().all(|(_, got, want)| got == want);
    (ok, cases.iter().map(|(n, g, w)| format!("{n}: {g} (want {w})")).collect::<Vec<_>>().join(", "))
}

pub fn run() -> Outcome {
    let g = GeneratorConfig { patients: 300, ..GeneratorConfig::preset(808) };
    let (panel, _) = generate(&g).expect("generate");
    let (_, data) = preset_model(Mode::Marginal, 3).build(&panel).expect("model data");
    let config = FitConfig { classes: 3, iterations: 4000, burn_in: 2000, thin: 4, seed: 88, chain: 0, stored_imputations: 0, ..FitConfig::default() };
    let archive = run_chain(&data, &config, &PriorSpec::default_for(&data.dims)).expect("fit");
    let report = ppp_suite(&archive, &data, &panel, REPLICATES, ReplicateMode::FreshRandomEffects, &RngStream::new(89, 0)).expect("ppp");
    let frac = report.patient_fraction_below(0.05);
    let in_band = BAND.0 <= frac && frac <= BAND.1;
    let (units_ok, units) = unit_cases();
    Outcome::new(
        in_band && units_ok,
        format!(
            "{REPLICATES} replicates, {} patient checks, fraction below 0.05 = {frac:.4} (band [{}, {}]); unit cases: {units}",
            report.patients.len(),
            BAND.0,
            BAND.1
        ),
    )
}
