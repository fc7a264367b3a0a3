use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use profimpute_cli::{execute, rerun, CliError, Command, Options, RunConfig};

#[derive(Parser)]
#[command(name = "profimpute", version, about = "Latent-profile multiple imputation of longitudinal outcomes")]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides [output] dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Upstream {
    /// Directory holding the artifacts of earlier commands (default: the output directory).
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic cohort with known profiles.
    Simulate(Common),
    /// Screen covariates against the outcome and its presence.
    Screen(Common),
    /// Run the sampler for the configured number of profiles.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this iteration and write a checkpoint.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Fit every profile count in [model] sweep and tabulate BIC and LPML.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Write completed datasets from a finished fit.
    Impute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        upstream: Upstream,
    },
    /// Model-selection criteria, convergence and posterior predictive checks.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        upstream: Upstream,
    },
    /// Pooled event-model estimates against the complete-case analysis.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        upstream: Upstream,
    },
    /// Re-execute the command recorded in a manifest and compare outputs.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (default: the manifest's directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn run_command(command: Command, common: Common, options: Options) -> Result<(), CliError> {
    let config = RunConfig::load(&common.config)?;
    let out = common
        .out
        .or_else(|| config.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set [output] dir".into()))?;
    let manifest = execute(command, &config, &out, &options)?;
    log::info!("{} wrote {} files; manifest {}", command, manifest.outputs.len(), out.join(profimpute_cli::Manifest::file_name(command.name())).display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Simulate(c) => run_command(Command::Simulate, c, Options::default()),
        Cmd::Screen(c) => run_command(Command::Screen, c, Options::default()),
        Cmd::Fit { common, resume, stop_after } => run_command(Command::Fit, common, Options { resume, stop_after, from: None }),
        Cmd::Sweep { common, resume, stop_after } => run_command(Command::Sweep, common, Options { resume, stop_after, from: None }),
        Cmd::Impute { common, upstream } => run_command(Command::Impute, common, Options { from: upstream.from, ..Default::default() }),
        Cmd::Diagnose { common, upstream } => run_command(Command::Diagnose, common, Options { from: upstream.from, ..Default::default() }),
        Cmd::Analyze { common, upstream } => run_command(Command::Analyze, common, Options { from: upstream.from, ..Default::default() }),
        Cmd::Rerun { manifest, out } => {
            let report = rerun(&manifest, out.as_deref())?;
            println!("{}: {} outputs identical", report.command, report.identical.len());
            if report.differing.is_empty() && report.missing.is_empty() {
                Ok(())
            } else {
                let mut bad = report.differing.clone();
                bad.extend(report.missing.iter().map(|m| format!("{m} (not written)")));
                Err(CliError::NotReproduced(bad.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).target(env_logger::Target::Stderr).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
