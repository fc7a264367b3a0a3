//! Run manifests and file digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// Hash of the resolved configuration in canonical JSON form.
pub fn config_hash(config: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

/// Command-line switches that change what a command does.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub resume: bool,
    pub stop_after: Option<usize>,
    /// Directory holding upstream artifacts; the output directory when absent.
    pub from: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub profimpute: String,
    pub archive_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Self { profimpute: env!("CARGO_PKG_VERSION").to_string(), archive_format: profimpute::gibbs::ARCHIVE_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub options: Options,
    pub seeds: BTreeMap<String, u64>,
    pub versions: Versions,
    /// Absolute input path to SHA-256.
    pub inputs: BTreeMap<PathBuf, String>,
    /// Output path relative to the output directory to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{} is not a valid manifest: {e}", path.display())))
    }
}

/// Tracks what a command reads and writes so its manifest can be written.
pub struct Run {
    pub command: String,
    pub out: PathBuf,
    inputs: BTreeMap<PathBuf, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn new(command: &str, out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let out = out.canonicalize().map_err(|e| CliError::io(out, e))?;
        Ok(Self { command: command.to_string(), out, inputs: BTreeMap::new(), outputs: BTreeMap::new() })
    }

    fn absolute(path: &Path) -> PathBuf {
        path.canonicalize().unwrap_or_else(|_| path.to_path_buf())
    }

    /// Read an input file and record its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(Self::absolute(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Record the digest of an input read by someone else.
    pub fn note_input(&mut self, path: &Path) -> Result<(), CliError> {
        let d = file_digest(path)?;
        self.inputs.insert(Self::absolute(path), d);
        Ok(())
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn guard(&self, target: &Path) -> Result<(), CliError> {
        let t = Self::absolute(target);
        if self.inputs.contains_key(&t) {
            return Err(CliError::Config(format!("refusing to overwrite input file {}", t.display())));
        }
        Ok(())
    }

    /// Write an output file below the output directory.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.path(rel);
        self.guard(&target)?;
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&target, bytes).map_err(|e| CliError::io(&target, e))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(profimpute::Error::from)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Record a file already written below the output directory.
    pub fn note_output(&mut self, rel: &str) -> Result<(), CliError> {
        let target = self.path(rel);
        self.guard(&target)?;
        let d = file_digest(&target)?;
        self.outputs.insert(rel.to_string(), d);
        Ok(())
    }

    pub fn forget_output(&mut self, rel: &str) {
        self.outputs.remove(rel);
    }

    pub fn finish(mut self, config: &RunConfig, options: &Options, seeds: BTreeMap<String, u64>) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            command: self.command.clone(),
            config_hash: config_hash(config),
            config: config.clone(),
            options: options.clone(),
            seeds,
            versions: Versions::current(),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let name = Manifest::file_name(&manifest.command);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(profimpute::Error::from)?;
        bytes.push(b'\n');
        let target = self.out.join(&name);
        fs::write(&target, bytes).map_err(|e| CliError::io(&target, e))?;
        Ok(manifest)
    }
}
