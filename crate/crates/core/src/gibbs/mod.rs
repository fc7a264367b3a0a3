//! Gibbs samplers for marginal and joint profiling.
//!
//! Both samplers share one driver ([`Sampler`]) and one set of block updates
//! ([`blocks`]); joint mode adds the presence blocks and the in-loop
//! imputation step.

mod archive;
pub mod blocks;
mod init;
mod joint;
mod likelihood;
mod marginal;

pub use archive::{parameter_columns, PosteriorArchive, PresenceDraw, RetainedDraw, StoredImputation, ARCHIVE_VERSION};
pub use blocks::{sweep, Block, FrozenBlocks};
pub use init::init_state;
pub use joint::{extract_imputations_joint, run_joint_chain};
pub use likelihood::{LikelihoodParams, PatientLikelihood};
pub use marginal::{impute_marginal, run_chain};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, Mode, ModelData, PriorSpec};
use crate::panel::Panel;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub classes: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Stream id of the chain; distinct chains use distinct ids.
    pub chain: u64,
    /// Joint mode: completed datasets kept from the run, chosen in advance.
    pub stored_imputations: usize,
    #[serde(default)]
    pub frozen: FrozenBlocks,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { classes: 3, iterations: 12_000, burn_in: 2_000, thin: 10, seed: 1, chain: 0, stored_imputations: 100, frozen: FrozenBlocks::default() }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::config("the number of profiles must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!("burn-in ({}) must be below the iteration count ({})", self.burn_in, self.iterations)));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        Ok(())
    }

    /// Iterations are numbered from 1.
    pub fn is_retained(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn stream(&self) -> RngStream {
        RngStream::new(self.seed, self.chain)
    }
}

/// `m` indices spread evenly over `0..total`, ending at the last one.
pub fn equally_spaced(total: usize, m: usize) -> Result<Vec<usize>> {
    if m > total {
        return Err(Error::config(format!("requested {m} draws but only {total} are retained")));
    }
    Ok((1..=m).map(|k| k * total / m - 1).collect())
}

/// One completed dataset: every follow-up outcome, observed or imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedDataset {
    pub draw_index: usize,
    pub iteration: usize,
    pub outcomes: Vec<Vec<f64>>,
}

impl CompletedDataset {
    pub(crate) fn assemble(data: &ModelData, draw_index: usize, iteration: usize, missing: &[Vec<f64>]) -> Self {
        let outcomes = data
            .patients
            .iter()
            .zip(missing)
            .map(|(p, m)| {
                let mut k = 0;
                p.outcome
                    .iter()
                    .map(|y| {
                        y.unwrap_or_else(|| {
                            k += 1;
                            m[k - 1]
                        })
                    })
                    .collect()
            })
            .collect();
        Self { draw_index, iteration, outcomes }
    }

    pub fn to_panel(&self, panel: &Panel) -> Result<Panel> {
        panel.with_outcomes(&self.outcomes)
    }
}

/// Resumable state of a run that stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub next_iteration: usize,
    pub state: ChainState,
    pub archive: PosteriorArchive,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    next_iteration: usize,
    state: ChainState,
}

const CHECKPOINT_FILE: &str = "checkpoint.json";

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.archive.save(dir)?;
        let header = CheckpointHeader { version: ARCHIVE_VERSION, next_iteration: self.next_iteration, state: self.state.clone() };
        fs::write(dir.join(CHECKPOINT_FILE), serde_json::to_vec(&header)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: CheckpointHeader = serde_json::from_slice(&fs::read(dir.join(CHECKPOINT_FILE))?)?;
        if header.version != ARCHIVE_VERSION {
            return Err(Error::config(format!("checkpoint version {} is not supported", header.version)));
        }
        Ok(Self { next_iteration: header.next_iteration, state: header.state, archive: PosteriorArchive::load(dir)? })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(CHECKPOINT_FILE).is_file()
    }

    /// Remove the checkpoint marker once a run has finished.
    pub fn clear(dir: &Path) -> Result<()> {
        let path = dir.join(CHECKPOINT_FILE);
        if path.is_file() {
            fs::remove_file(path)?;
        }
        Ok(())
    }
}

/// Drives one chain.
pub struct Sampler<'a> {
    data: &'a ModelData,
    prior: PriorSpec,
    config: FitConfig,
    stream: RngStream,
    state: ChainState,
    next_iteration: usize,
    archive: PosteriorArchive,
    stored_at: Vec<usize>,
    likelihood: PatientLikelihood,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a ModelData, prior: PriorSpec, config: FitConfig) -> Result<Self> {
        Self::check(data, &prior, &config)?;
        let stream = config.stream();
        let state = init_state(data, &stream)?;
        let archive = PosteriorArchive::new(data.mode, data.dims, config.clone(), data.patients.iter().map(|p| p.missing_rows.len()).collect());
        Self::assemble(data, prior, config, state, 1, archive)
    }

    /// Continue a run from a checkpoint. The configuration stored with the
    /// checkpoint is used.
    pub fn resume(data: &'a ModelData, prior: PriorSpec, checkpoint: Checkpoint) -> Result<Self> {
        let config = checkpoint.archive.config.clone();
        Self::check(data, &prior, &config)?;
        if checkpoint.archive.dims != data.dims || checkpoint.archive.mode != data.mode {
            return Err(Error::config("checkpoint was written for a different model or dataset"));
        }
        Self::assemble(data, prior, config, checkpoint.state, checkpoint.next_iteration, checkpoint.archive)
    }

    fn check(data: &ModelData, prior: &PriorSpec, config: &FitConfig) -> Result<()> {
        config.validate()?;
        prior.validate(&data.dims)?;
        if config.classes != data.dims.classes {
            return Err(Error::config(format!("configured {} profiles but the model data has {}", config.classes, data.dims.classes)));
        }
        if data.patients.iter().any(|p| p.observed.is_empty()) {
            return Err(Error::data("every patient needs at least one observed follow-up outcome"));
        }
        Ok(())
    }

    fn assemble(data: &'a ModelData, prior: PriorSpec, config: FitConfig, state: ChainState, next_iteration: usize, archive: PosteriorArchive) -> Result<Self> {
        let stored_at = match data.mode {
            Mode::Joint => equally_spaced(config.retained_count(), config.stored_imputations)?,
            Mode::Marginal => Vec::new(),
        };
        let stream = config.stream();
        Ok(Self { data, prior, config, stream, state, next_iteration, archive, stored_at, likelihood: PatientLikelihood::default() })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Number of completed iterations.
    pub fn completed(&self) -> usize {
        self.next_iteration - 1
    }

    pub fn is_done(&self) -> bool {
        self.completed() >= self.config.iterations
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.next_iteration;
        sweep(&mut self.state, self.data, &self.prior, &self.stream, t as u64, self.config.frozen)?;
        let mut seen = vec![false; self.data.dims.classes];
        for &c in &self.state.allocation {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            self.archive.empty_class_iterations += 1;
        }
        if self.config.is_retained(t) {
            let s = &self.state;
            let params = LikelihoodParams { alloc: &s.alloc, outcome: &s.outcome, presence: s.presence.as_ref() };
            let loglik = self.likelihood.all(self.data, &params)?;
            let k = self.archive.draws.len();
            self.archive.draws.push(RetainedDraw::from_state(t, s, loglik));
            if self.stored_at.binary_search(&k).is_ok() {
                if let Some(imp) = &s.imputed {
                    self.archive.imputations.push(StoredImputation { draw_index: k, iteration: t, values: imp.clone() });
                }
            }
        }
        self.next_iteration += 1;
        Ok(())
    }

    /// Run up to and including iteration `last` (capped at the configured total).
    pub fn run_until(&mut self, last: usize) -> Result<()> {
        let last = last.min(self.config.iterations);
        while self.next_iteration <= last {
            self.step()?;
            if self.next_iteration % 1000 == 0 {
                log::debug!("iteration {}/{}", self.next_iteration, self.config.iterations);
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { next_iteration: self.next_iteration, state: self.state.clone(), archive: self.archive.clone() }
    }

    pub fn finish(self) -> PosteriorArchive {
        if self.archive.empty_class_iterations > 0 {
            log::warn!(
                "{} of {} iterations left at least one profile empty; its parameters were drawn from the prior",
                self.archive.empty_class_iterations,
                self.completed()
            );
        }
        self.archive
    }
}
