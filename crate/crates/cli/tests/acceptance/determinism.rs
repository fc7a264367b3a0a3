//! Every command re-run from its manifest into a fresh directory reproduces
//! its outputs byte for byte.

use std::path::Path;

use profimpute::model::Mode;
use profimpute_cli::{execute, rerun, Command, Manifest, Options, RunConfig};

use crate::common::{preset_config, Outcome};

const PIPELINE: [Command; 7] = [Command::Simulate, Command::Screen, Command::Fit, Command::Sweep, Command::Impute, Command::Diagnose, Command::Analyze];

fn small(panel: &Path, mode: Mode) -> RunConfig {
    let mut cfg = preset_config(panel, "");
    cfg.model.mode = mode;
    cfg.model.sweep = vec![2, 3];
    cfg.mcmc.iterations = 300;
    cfg.mcmc.burn_in = 100;
    cfg.mcmc.thin = 2;
    cfg.mcmc.chains = 2;
    cfg.impute.m = 5;
    cfg.diagnose.replicates = 40;
    cfg.simulate.patients = Some(120);
    cfg.simulate.seed = 12;
    cfg
}

/// Run the pipeline in `dir`, then re-run each manifest elsewhere.
/// Returns (outputs compared, problems).
fn check(dir: &Path, mode: Mode) -> Result<(usize, Vec<String>), String> {
    let cfg = small(&dir.join("panel.csv"), mode);
    let opts = Options::default();
    for cmd in PIPELINE {
        execute(cmd, &cfg, dir, &opts).map_err(|e| format!("{cmd}: {e}"))?;
    }
    let mut compared = 0;
    let mut problems = Vec::new();
    for cmd in PIPELINE {
        let manifest = dir.join(Manifest::file_name(cmd.name()));
        let fresh = dir.join(format!("rerun-{}", cmd.name()));
        let report = rerun(&manifest, Some(&fresh)).map_err(|e| format!("rerun {cmd}: {e}"))?;
        compared += report.identical.len() + report.differing.len() + report.missing.len();
        problems.extend(report.differing.iter().map(|f| format!("{cmd}: {f} differs")));
        problems.extend(report.missing.iter().map(|f| format!("{cmd}: {f} missing")));
        let archives = report.identical.iter().filter(|f| f.ends_with("archive.bin")).count();
        let imputed = report.identical.iter().filter(|f| f.contains("imputed_")).count();
        if cmd == Command::Fit && archives != cfg.mcmc.chains {
            problems.push(format!("fit: {archives} identical archives"));
        }
        if cmd == Command::Impute && imputed != cfg.impute.m {
            problems.push(format!("impute: {imputed} identical datasets"));
        }
    }
    Ok((compared, problems))
}

pub fn run() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Mode::Marginal, Mode::Joint] {
        let dir = tempfile::tempdir().expect("tempdir");
        match check(dir.path(), mode) {
            Ok((n, problems)) => {
                pass &= problems.is_empty();
                parts.push(format!("{mode:?}: {n} outputs over {} commands, {} mismatches{}", PIPELINE.len(), problems.len(), problems.first().map(|p| format!(" ({p})")).unwrap_or_default()));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{mode:?}: {e}"));
            }
        }
    }
    Outcome::new(pass, parts.join("; "))
}
