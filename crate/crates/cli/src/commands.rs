//! The subcommands. Each reads its inputs, writes its artifacts below the
//! output directory and finishes by writing a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use profimpute::analysis::{cca_analysis, compare_report, comparison_points, fit_event_model, pool, ComparisonRow, GeeFit, PooledEstimate};
use profimpute::diagnostics::{
    bic, convergence_report, lpml, modal_allocation, posterior_means, ppp_suite, relabeled_draws, scalar_traces, BicReport, ConvergenceReport,
    LpmlReport, PppCount,
};
use profimpute::gibbs::{extract_imputations_joint, impute_marginal, Checkpoint, CompletedDataset, FitConfig, PosteriorArchive, Sampler};
use profimpute::model::{Mode, ModelData, ModelLayout, PriorSpec};
use profimpute::panel::{build_panel, read_long_csv, screen_covariates, write_panel_csv, Panel, PanelSummary, SplineBasis};
use profimpute::rng::RngStream;
use profimpute::synth::generate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{Manifest, Options, Run};
use crate::CliError;

/// Stream ids of the post-processing steps; chains use their index.
const IMPUTE_STREAM: u64 = 1 << 32;
const REPLICATE_STREAM: u64 = (1 << 32) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Screen,
    Fit,
    Sweep,
    Impute,
    Diagnose,
    Analyze,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Screen => "screen",
            Command::Fit => "fit",
            Command::Sweep => "sweep",
            Command::Impute => "impute",
            Command::Diagnose => "diagnose",
            Command::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [Command::Simulate, Command::Screen, Command::Fit, Command::Sweep, Command::Impute, Command::Diagnose, Command::Analyze]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command '{s}'")))
    }
}

/// Run one command. `options.from` is made absolute before it is recorded.
pub fn execute(command: Command, config: &RunConfig, out: &Path, options: &Options) -> Result<Manifest, CliError> {
    config.validate_for(command)?;
    let mut run = Run::new(command.name(), out)?;
    let mut options = options.clone();
    if matches!(command, Command::Impute | Command::Diagnose | Command::Analyze) {
        let from = options.from.clone().unwrap_or_else(|| run.out.clone());
        options.from = Some(from.canonicalize().map_err(|e| CliError::io(&from, e))?);
    }
    let mut seeds = BTreeMap::new();
    match command {
        Command::Simulate => {
            seeds.insert("simulate".into(), config.simulate.seed);
            simulate(config, &mut run)?
        }
        Command::Screen => screen(config, &mut run)?,
        Command::Fit => {
            seeds.insert("mcmc".into(), config.mcmc.seed);
            fit(config, &mut run, &options)?
        }
        Command::Sweep => {
            seeds.insert("mcmc".into(), config.mcmc.seed);
            sweep(config, &mut run, &options)?
        }
        Command::Impute => {
            seeds.insert("impute".into(), config.impute.seed);
            impute(config, &mut run, options.from.as_deref().expect("resolved"))?
        }
        Command::Diagnose => {
            seeds.insert("diagnose".into(), config.diagnose.seed);
            diagnose(config, &mut run, options.from.as_deref().expect("resolved"))?
        }
        Command::Analyze => analyze(config, &mut run, options.from.as_deref().expect("resolved"))?,
    }
    run.finish(config, &options, seeds)
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerunReport {
    pub command: String,
    pub out: PathBuf,
    pub identical: Vec<String>,
    pub differing: Vec<String>,
    pub missing: Vec<String>,
}

/// Re-execute the command recorded in a manifest and compare every output
/// digest with the recorded one.
pub fn rerun(manifest_path: &Path, out: Option<&Path>) -> Result<RerunReport, CliError> {
    let old = Manifest::load(manifest_path)?;
    for (path, digest) in &old.inputs {
        if !path.exists() {
            continue;
        }
        if &crate::manifest::file_digest(path)? != digest {
            return Err(CliError::Config(format!("input {} changed since the manifest was written", path.display())));
        }
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let command: Command = old.command.parse()?;
    let new = execute(command, &old.config, &out, &old.options)?;
    let mut report = RerunReport { command: old.command.clone(), out, identical: Vec::new(), differing: Vec::new(), missing: Vec::new() };
    for (rel, digest) in &old.outputs {
        match new.outputs.get(rel) {
            Some(d) if d == digest => report.identical.push(rel.clone()),
            Some(_) => report.differing.push(rel.clone()),
            None => report.missing.push(rel.clone()),
        }
    }
    Ok(report)
}

fn load_panel(config: &RunConfig, run: &mut Run) -> Result<Panel, CliError> {
    let path = config.panel_path()?.to_path_buf();
    let bytes = run.read(&path)?;
    let table = read_long_csv(bytes.as_slice(), config.delimiter())?;
    let panel = build_panel(&table, &config.panel_config())?;
    if panel.patients.is_empty() {
        return Err(CliError::Core(profimpute::Error::Data("no patient passed the inclusion rules".into())));
    }
    if !panel.exclusions.is_empty() {
        log::info!("{} patients excluded", panel.exclusions.len());
    }
    Ok(panel)
}

fn panel_csv(panel: &Panel, delimiter: u8) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_panel_csv(panel, &mut buf, delimiter)?;
    Ok(buf)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(profimpute::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv buffer: {e}")))
}

#[derive(Serialize)]
struct PanelReport<'a> {
    summary: PanelSummary,
    outcome_spline: Option<&'a SplineBasis>,
    presence_spline: Option<&'a SplineBasis>,
    dropped_columns: Vec<String>,
}

fn write_panel_outputs(run: &mut Run, config: &RunConfig, panel: &Panel, layout: &ModelLayout) -> Result<(), CliError> {
    run.write("panel/canonical.csv", &panel_csv(panel, config.delimiter())?)?;
    let mut dropped = layout.outcome.dropped.clone();
    if let Some(p) = &layout.presence {
        dropped.extend(p.dropped.iter().map(|d| format!("presence {d}")));
    }
    let report = PanelReport {
        summary: panel.summary(),
        outcome_spline: layout.outcome.spline.as_ref(),
        presence_spline: layout.presence.as_ref().and_then(|p| p.spline.as_ref()),
        dropped_columns: dropped,
    };
    run.write_json("panel/summary.json", &report)
}

fn simulate(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let generator = config.generator_config();
    let (panel, truth) = generate(&generator)?;
    run.write("panel.csv", &panel_csv(&panel, config.delimiter())?)?;
    run.write_json("truth.json", &truth)?;
    let s = panel.summary();
    log::info!("simulated {} patients, {} of {} cells observed", s.patients, s.observed_cells, s.followup_rows);
    Ok(())
}

fn screen(config: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let report = screen_covariates(&panel, config.screen.alpha, config.screen.candidates.as_deref())?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    run.write_json("screen.json", &report)?;
    println!("selected covariates: {}", if report.selected.is_empty() { "(none)".to_string() } else { report.selected.join(", ") });
    Ok(())
}

fn chain_dir(prefix: &str, k: usize) -> String {
    format!("{prefix}/chain-{k}")
}

/// Whether `dir` already holds a finished archive for `fc`.
fn finished_archive(dir: &Path, fc: &FitConfig) -> Option<PosteriorArchive> {
    let a = PosteriorArchive::load(dir).ok()?;
    (a.config == *fc && a.len() == fc.retained_count() && !Checkpoint::exists(dir)).then_some(a)
}

/// Run or continue one chain in `dir`. Returns the archive when the chain is
/// complete and `None` when it stopped early and left a checkpoint.
fn run_chain_in(data: &ModelData, prior: &PriorSpec, fc: &FitConfig, dir: &Path, options: &Options) -> Result<Option<PosteriorArchive>, CliError> {
    let mut sampler = if options.resume && Checkpoint::exists(dir) {
        let cp = Checkpoint::load(dir)?;
        if cp.archive.config != *fc {
            return Err(CliError::Config(format!("checkpoint in {} was written with a different [mcmc] configuration", dir.display())));
        }
        log::info!("resuming {} at iteration {}", dir.display(), cp.next_iteration);
        Sampler::resume(data, prior.clone(), cp)?
    } else {
        if options.resume {
            if let Some(a) = finished_archive(dir, fc) {
                log::info!("{} is already complete", dir.display());
                return Ok(Some(a));
            }
            log::info!("no checkpoint in {}; starting from the beginning", dir.display());
        }
        Sampler::new(data, prior.clone(), fc.clone())?
    };
    sampler.run_until(options.stop_after.unwrap_or(fc.iterations))?;
    if sampler.is_done() {
        let archive = sampler.finish();
        archive.save(dir)?;
        Checkpoint::clear(dir)?;
        Ok(Some(archive))
    } else {
        log::info!("stopped after iteration {}; checkpoint written to {}", sampler.completed(), dir.display());
        sampler.checkpoint().save(dir)?;
        Ok(None)
    }
}

fn note_chain_outputs(run: &mut Run, rel: &str, complete: bool) -> Result<(), CliError> {
    run.note_output(&format!("{rel}/archive.json"))?;
    run.note_output(&format!("{rel}/archive.bin"))?;
    if complete {
        run.forget_output(&format!("{rel}/checkpoint.json"));
    } else {
        run.note_output(&format!("{rel}/checkpoint.json"))?;
    }
    Ok(())
}

fn fit(config: &RunConfig, run: &mut Run, options: &Options) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let spec = config.model_spec(config.model.classes)?;
    let (layout, data) = spec.build(&panel)?;
    write_panel_outputs(run, config, &panel, &layout)?;
    run.write_json("fit/layout.json", &layout)?;
    let prior = PriorSpec::default_for(&data.dims);
    let results: Vec<Result<Option<PosteriorArchive>, CliError>> = (0..config.mcmc.chains)
        .into_par_iter()
        .map(|k| {
            let fc = config.fit_config(config.model.classes, k as u64);
            run_chain_in(&data, &prior, &fc, &run.path(&chain_dir("fit", k)), options)
        })
        .collect();
    let mut done = 0;
    for (k, r) in results.into_iter().enumerate() {
        let complete = r?.is_some();
        done += complete as usize;
        note_chain_outputs(run, &chain_dir("fit", k), complete)?;
    }
    println!("fit: {done} of {} chains complete", config.mcmc.chains);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub classes: usize,
    pub bic: f64,
    pub lpml: f64,
    pub parameters: usize,
    pub sample_size: usize,
    pub unstable_cpo: usize,
    pub min_bic: bool,
    pub max_lpml: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub mode: Mode,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn best_by_lpml(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.max_lpml).map(|r| r.classes)
    }

    pub fn best_by_bic(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.min_bic).map(|r| r.classes)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:>3}  {:>14}  {:>14}\n", "L", "BIC", "LPML");
        for r in &self.rows {
            s += &format!(
                "{:>3}  {:>14.2}{} {:>14.2}{}\n",
                r.classes,
                r.bic,
                if r.min_bic { "*" } else { " " },
                r.lpml,
                if r.max_lpml { "*" } else { " " }
            );
        }
        s
    }
}

/// Stream id of the sweep fit with `classes` profiles.
fn sweep_stream(classes: usize) -> u64 {
    1000 * classes as u64
}

fn sweep(config: &RunConfig, run: &mut Run, options: &Options) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let mut counts = config.model.sweep.clone();
    counts.sort_unstable();
    counts.dedup();
    let built = counts
        .iter()
        .map(|&l| Ok((l, config.model_spec(l)?.build(&panel)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_panel_outputs(run, config, &panel, &built[0].1 .0)?;
    let results: Vec<Result<(usize, Option<(BicReport, LpmlReport)>), CliError>> = built
        .par_iter()
        .map(|(l, (_, data))| {
            let prior = PriorSpec::default_for(&data.dims);
            let fc = config.fit_config(*l, sweep_stream(*l));
            let dir = run.path(&format!("sweep/L{l}"));
            let scores = match run_chain_in(data, &prior, &fc, &dir, options)? {
                Some(archive) => Some((bic(&archive, data)?, lpml(&archive.loglik_table())?)),
                None => None,
            };
            Ok((*l, scores))
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        let (l, scores) = r?;
        let rel = format!("sweep/L{l}");
        note_chain_outputs(run, &rel, scores.is_some())?;
        if let Some((b, p)) = scores {
            for w in p.excluded.iter().map(|i| format!("L={l}: patient {i} has a zero predictive ordinate and is left out of LPML")) {
                log::warn!("{w}");
            }
            rows.push(SweepRow {
                classes: l,
                bic: b.bic,
                lpml: p.lpml,
                parameters: b.parameters,
                sample_size: b.sample_size,
                unstable_cpo: p.unstable.len(),
                min_bic: false,
                max_lpml: false,
            });
        }
    }
    if let Some(k) = rows.iter().enumerate().min_by(|a, b| a.1.bic.total_cmp(&b.1.bic)).map(|x| x.0) {
        rows[k].min_bic = true;
    }
    if let Some(k) = rows.iter().enumerate().max_by(|a, b| a.1.lpml.total_cmp(&b.1.lpml)).map(|x| x.0) {
        rows[k].max_lpml = true;
    }
    let table = SweepTable { mode: config.model.mode, rows };
    run.write_json("sweep/table.json", &table)?;
    run.write("sweep/table.csv", &csv_bytes(&table.rows)?)?;
    print!("{}", table.render());
    Ok(())
}

/// Load the finished archive of chain `k` from an earlier `fit`.
fn load_fit_chain(run: &mut Run, from: &Path, k: usize) -> Result<PosteriorArchive, CliError> {
    let dir = from.join(chain_dir("fit", k));
    if Checkpoint::exists(&dir) {
        return Err(CliError::Config(format!("the fit in {} stopped early; finish it with `fit --resume`", dir.display())));
    }
    if !dir.join("archive.json").is_file() {
        return Err(CliError::Config(format!("no fit archive in {}; run `fit` first", dir.display())));
    }
    run.note_input(&dir.join("archive.json"))?;
    run.note_input(&dir.join("archive.bin"))?;
    let a = PosteriorArchive::load(&dir)?;
    if a.len() != a.config.retained_count() {
        return Err(CliError::Config(format!("the archive in {} is incomplete", dir.display())));
    }
    Ok(a)
}

fn model_for_archive(config: &RunConfig, panel: &Panel, archive: &PosteriorArchive) -> Result<ModelData, CliError> {
    let (_, data) = config.model_spec(archive.config.classes)?.build(panel)?;
    if data.dims != archive.dims || data.mode != archive.mode {
        return Err(CliError::Config("the fit archive does not match the current [model] and [input] settings".into()));
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedFile {
    pub file: String,
    pub draw_index: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationIndex {
    pub mode: Mode,
    pub datasets: Vec<ImputedFile>,
}

pub const IMPUTATION_INDEX: &str = "imputations/index.json";

fn impute(config: &RunConfig, run: &mut Run, from: &Path) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let archive = load_fit_chain(run, from, 0)?;
    let data = model_for_archive(config, &panel, &archive)?;
    let m = config.impute.m;
    let completed: Vec<CompletedDataset> = match archive.mode {
        Mode::Marginal => impute_marginal(&archive, &data, m, &RngStream::new(config.impute.seed, IMPUTE_STREAM))?,
        Mode::Joint => {
            if m > archive.imputations.len() {
                return Err(CliError::Config(format!(
                    "[impute] m asks for {m} datasets but the joint fit stored {}; refit with the same m",
                    archive.imputations.len()
                )));
            }
            extract_imputations_joint(&archive, &data, m)?
        }
    };
    let mut datasets = Vec::with_capacity(m);
    for (k, c) in completed.iter().enumerate() {
        let file = format!("imputations/imputed_{:03}.csv", k + 1);
        run.write(&file, &panel_csv(&c.to_panel(&panel)?, config.delimiter())?)?;
        datasets.push(ImputedFile { file, draw_index: c.draw_index, iteration: c.iteration });
    }
    run.write_json(IMPUTATION_INDEX, &ImputationIndex { mode: archive.mode, datasets })?;
    println!("impute: wrote {m} completed datasets");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub mode: Mode,
    pub classes: usize,
    pub chains: usize,
    pub class_sizes: Vec<usize>,
    pub empty_class_iterations: Vec<usize>,
    pub bic: BicReport,
    pub lpml: f64,
    pub unstable_cpo: Vec<usize>,
    pub excluded_cpo: Vec<usize>,
    pub convergence: ConvergenceReport,
    pub ppp_replicates: usize,
    pub ppp_counts: Vec<PppCount>,
    pub ppp_counts_text: Vec<String>,
    pub patient_ppp_below_5pct: f64,
    pub percentile_skipped: Vec<String>,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    chain: usize,
    draw: usize,
    parameter: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct ProfileRow {
    quarter: u32,
    class: usize,
    fitted_mean: f64,
    observed_mean: Option<f64>,
    observed_cells: usize,
}

/// Fitted population trajectory of each profile, averaged over the
/// patients seen at each quarter, next to the observed means of the
/// patients modally allocated to it.
fn profile_rows(panel: &Panel, data: &ModelData, means: &profimpute::model::OutcomeParams, modal: &[usize]) -> Vec<ProfileRow> {
    let classes = data.dims.classes;
    let mut acc: BTreeMap<(u32, usize), (f64, usize, f64, usize)> = BTreeMap::new();
    for ((p, pd), &c_modal) in panel.patients.iter().zip(&data.patients).zip(modal) {
        let fixed = &pd.design.fixed * &means.fixed_effects;
        for c in 0..classes {
            let prof = &pd.design.profile * means.profile_effects.row(c).transpose();
            for (j, r) in p.followup.iter().enumerate() {
                let e = acc.entry((r.quarter, c)).or_insert((0.0, 0, 0.0, 0));
                e.0 += fixed[j] + prof[j];
                e.1 += 1;
                if c == c_modal {
                    if let Some(y) = r.outcome {
                        e.2 += y;
                        e.3 += 1;
                    }
                }
            }
        }
    }
    acc.into_iter()
        .map(|((quarter, class), (f, n, o, k))| ProfileRow {
            quarter,
            class,
            fitted_mean: f / n as f64,
            observed_mean: (k > 0).then(|| o / k as f64),
            observed_cells: k,
        })
        .collect()
}

fn diagnose(config: &RunConfig, run: &mut Run, from: &Path) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let archives = (0..config.mcmc.chains).map(|k| load_fit_chain(run, from, k)).collect::<Result<Vec<_>, _>>()?;
    let data = model_for_archive(config, &panel, &archives[0])?;
    let relabeled: Vec<_> = archives.iter().map(|a| relabeled_draws(a, &data)).collect();
    let convergence = convergence_report(&relabeled, archives[0].config.thin);
    let b = bic(&archives[0], &data)?;
    let table: Vec<Vec<f64>> = archives.iter().flat_map(|a| a.loglik_table()).collect();
    let lp = lpml(&table)?;
    let ppp = ppp_suite(&archives[0], &data, &panel, config.diagnose.replicates, config.diagnose.replicate_mode, &RngStream::new(config.diagnose.seed, REPLICATE_STREAM))?;
    let all: Vec<_> = relabeled.concat();
    let modal = modal_allocation(&all, data.dims.classes);
    let mut class_sizes = vec![0; data.dims.classes];
    for &c in &modal {
        class_sizes[c] += 1;
    }
    let report = DiagnosticsReport {
        mode: data.mode,
        classes: data.dims.classes,
        chains: archives.len(),
        class_sizes,
        empty_class_iterations: archives.iter().map(|a| a.empty_class_iterations).collect(),
        bic: b,
        lpml: lp.lpml,
        unstable_cpo: lp.unstable.clone(),
        excluded_cpo: lp.excluded.clone(),
        convergence,
        ppp_replicates: ppp.replicates,
        ppp_counts_text: ppp.counts.iter().map(PppCount::describe).collect(),
        ppp_counts: ppp.counts.clone(),
        patient_ppp_below_5pct: ppp.patient_fraction_below(0.05),
        percentile_skipped: ppp.percentile_skipped.clone(),
    };
    run.write_json("diagnostics/report.json", &report)?;
    run.write("diagnostics/ppp_patients.csv", &csv_bytes(&ppp.patients)?)?;
    run.write("diagnostics/ppp_quarters.csv", &csv_bytes(&ppp.quarters)?)?;
    let mut traces = Vec::new();
    let named: Vec<Vec<(String, Vec<f64>)>> = relabeled.iter().map(|c| scalar_traces(c)).collect();
    for (chain, series) in named.iter().enumerate() {
        for (name, values) in series {
            traces.extend(values.iter().enumerate().map(|(draw, &value)| TraceRow { chain, draw, parameter: name, value }));
        }
    }
    run.write("diagnostics/traces.csv", &csv_bytes(&traces)?)?;
    let means = posterior_means(&all).ok_or_else(|| CliError::Config("the fit retained no draws".into()))?;
    run.write("diagnostics/profiles.csv", &csv_bytes(&profile_rows(&panel, &data, &means.outcome, &modal))?)?;
    for line in &report.ppp_counts_text {
        log::info!("{line}");
    }
    println!("diagnose: BIC {:.2}, LPML {:.2}", report.bic.bic, report.lpml);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub imputations: usize,
    pub adjusters: Vec<String>,
    pub pooled: Vec<PooledEstimate>,
    pub complete_case: GeeFit,
    pub comparison: Vec<ComparisonRow>,
}

fn analyze(config: &RunConfig, run: &mut Run, from: &Path) -> Result<(), CliError> {
    let panel = load_panel(config, run)?;
    let index_path = from.join(IMPUTATION_INDEX);
    if !index_path.is_file() {
        return Err(CliError::Config(format!("no imputations in {}; run `impute` first", from.display())));
    }
    let index: ImputationIndex = serde_json::from_slice(&run.read(&index_path)?).map_err(profimpute::Error::from)?;
    let adjusters = &config.analysis.adjusters;
    let correlation = config.analysis.correlation;
    let mut fits = Vec::with_capacity(index.datasets.len());
    for d in &index.datasets {
        let bytes = run.read(&from.join(&d.file))?;
        let completed = build_panel(&read_long_csv(bytes.as_slice(), config.delimiter())?, &config.panel_config())?;
        let same = completed.patients.len() == panel.patients.len()
            && completed.patients.iter().zip(&panel.patients).all(|(a, b)| a.id == b.id && a.followup.len() == b.followup.len());
        if !same {
            return Err(CliError::Config(format!("{} does not match the input panel", d.file)));
        }
        let outcomes: Vec<Vec<f64>> =
            completed.patients.iter().map(|p| p.followup.iter().map(|r| r.outcome.unwrap_or(f64::NAN)).collect()).collect();
        fits.push(fit_event_model(&panel, &outcomes, adjusters, correlation)?);
    }
    let pooled = pool(&fits)?;
    let cca = cca_analysis(&panel, adjusters, correlation)?;
    let comparison = compare_report(&pooled, &cca);
    run.write("analysis/comparison.csv", &csv_bytes(&comparison_points(&comparison))?)?;
    let report = AnalysisReport { imputations: fits.len(), adjusters: adjusters.clone(), pooled, complete_case: cca, comparison };
    run.write_json("analysis/report.json", &report)?;
    println!("{:<14} {:>10} {:>10}", "term", "imputed", "complete");
    for r in &report.comparison {
        let f = |v: Option<(f64, f64, f64)>| v.map(|x| format!("{:.3}", x.0)).unwrap_or_else(|| "-".into());
        println!("{:<14} {:>10} {:>10}", r.term, f(r.imputed), f(r.complete_case));
    }
    Ok(())
}
