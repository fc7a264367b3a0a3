//! The profile-count sweep on three-profile data, repeated over seeds.

use std::fs;

use profimpute_cli::{execute, Command, Options, SweepTable};
use rayon::prelude::*;

use crate::common::{preset_config, Outcome};

const SEEDS: u64 = 10;
const NEEDED: usize = 7;

/// Profile counts picked by LPML and by BIC for one simulated cohort.
fn choice(seed: u64) -> Result<(Option<usize>, Option<usize>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path();
    let mut cfg = preset_config(&out.join("panel.csv"), "");
    cfg.model.sweep = vec![2, 3, 4];
    cfg.mcmc.iterations = 3000;
    cfg.mcmc.burn_in = 1000;
    cfg.mcmc.thin = 5;
    cfg.mcmc.seed = 100 + seed;
    cfg.simulate.patients = Some(300);
    cfg.simulate.seed = seed;
    let opts = Options::default();
    execute(Command::Simulate, &cfg, out, &opts).map_err(|e| e.to_string())?;
    execute(Command::Sweep, &cfg, out, &opts).map_err(|e| e.to_string())?;
    let bytes = fs::read(out.join("sweep/table.json")).map_err(|e| e.to_string())?;
    let table: SweepTable = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    Ok((table.best_by_lpml(), table.best_by_bic()))
}

fn show(l: Option<usize>) -> String {
    l.map_or("-".into(), |l| l.to_string())
}

pub fn run() -> Outcome {
    let picks: Vec<_> = (1..=SEEDS).into_par_iter().map(choice).collect();
    let mut hits = 0;
    let mut parts = Vec::new();
    for (seed, p) in (1..=SEEDS).zip(&picks) {
        match p {
            Ok((lpml, bic)) => {
                hits += usize::from(*lpml == Some(3));
                parts.push(format!("seed {seed}: LPML {} BIC {}", show(*lpml), show(*bic)));
            }
            Err(e) => parts.push(format!("seed {seed}: error {e}")),
        }
    }
    Outcome::new(hits >= NEEDED, format!("LPML picked L=3 in {hits} of {SEEDS} (need {NEEDED}); {}", parts.join("; ")))
}
