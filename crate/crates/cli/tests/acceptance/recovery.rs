//! Profiles and fixed effects recovered from the three-profile preset.

use profimpute::diagnostics::{adjusted_rand_index, modal_allocation, relabeled_draws};
use profimpute::gibbs::{run_chain, FitConfig};
use profimpute::model::{Mode, PriorSpec};
use profimpute::synth::{generate, GeneratorConfig};

use crate::common::{mean, preset_model, variance, Outcome};

const ARI_FLOOR: f64 = 0.9;
const SD_LIMIT: f64 = 3.0;

pub fn run() -> Outcome {
    let g = GeneratorConfig::preset(404);
    let (panel, truth) = generate(&g).expect("generate");
    let (_, data) = preset_model(Mode::Marginal, 3).build(&panel).expect("model data");
    let prior = PriorSpec::default_for(&data.dims);
    let config = FitConfig { classes: 3, iterations: 4000, burn_in: 2000, thin: 5, seed: 17, chain: 0, stored_imputations: 0, ..FitConfig::default() };
    let archive = run_chain(&data, &config, &prior).expect("fit");
    let draws = relabeled_draws(&archive, &data);
    let modal = modal_allocation(&draws, 3);
    let ari = adjusted_rand_index(&modal, &truth.labels);

    let mut pass = ari > ARI_FLOOR;
    let mut parts = vec![format!("ARI {ari:.4} (floor {ARI_FLOOR})")];
    for (k, name) in ["intercept", "age", "visits"].iter().enumerate() {
        let v: Vec<f64> = draws.iter().map(|d| d.fixed_effects[k]).collect();
        let (m, sd) = (mean(&v), variance(&v).sqrt());
        let z = (m - g.fixed_effects[k]).abs() / sd;
        pass &= z <= SD_LIMIT;
        parts.push(format!("{name} {m:.4} vs {} ({z:.2} sd)", g.fixed_effects[k]));
    }
    Outcome::new(pass, format!("{} draws; {}; limit {SD_LIMIT} sd", draws.len(), parts.join(", ")))
}
