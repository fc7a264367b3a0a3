//! Run configuration read from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use profimpute::analysis::WorkingCorrelation;
use profimpute::diagnostics::ReplicateMode;
use profimpute::gibbs::FitConfig;
use profimpute::model::{DesignColumns, Mode, ModelSpec};
use profimpute::panel::{KnotPlacement, PanelConfig, SplineBasisSpec};
use profimpute::synth::{GeneratorConfig, Mechanism};
use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Long-format panel; relative paths are taken from the config file's directory.
    pub panel: Option<PathBuf>,
    pub delimiter: char,
    pub baseline_columns: Vec<String>,
    pub baseline_first_quarter: u32,
    pub baseline_last_quarter: u32,
}

impl Default for InputSection {
    fn default() -> Self {
        let p = PanelConfig::default();
        Self {
            panel: None,
            delimiter: ',',
            baseline_columns: Vec::new(),
            baseline_first_quarter: p.baseline_first_quarter,
            baseline_last_quarter: p.baseline_last_quarter,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub fixed: Option<Vec<String>>,
    pub profile: Option<Vec<String>>,
    pub random: Option<Vec<String>>,
}

impl DesignSection {
    fn resolve(&self, default: &DesignColumns) -> DesignColumns {
        DesignColumns {
            fixed: self.fixed.clone().unwrap_or_else(|| default.fixed.clone()),
            profile: self.profile.clone().unwrap_or_else(|| default.profile.clone()),
            random: self.random.clone().unwrap_or_else(|| default.random.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mode: Mode,
    pub classes: usize,
    /// Profile counts compared by `sweep`.
    pub sweep: Vec<usize>,
    /// Baseline columns of the allocation model; an intercept is always added.
    pub allocation: Vec<String>,
    pub outcome: DesignSection,
    pub presence: DesignSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelSpec::default();
        Self {
            mode: m.mode,
            classes: m.classes,
            sweep: vec![2, 3, 4],
            allocation: m.allocation,
            outcome: DesignSection::default(),
            presence: DesignSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSection {
    /// Interior knots at these quantiles of the pooled observed times.
    pub quantiles: Option<Vec<f64>>,
    /// Explicit interior knots; needs `lower` and `upper`.
    pub interior: Option<Vec<f64>>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub degree: usize,
    pub include_intercept: bool,
}

impl Default for SplineSection {
    fn default() -> Self {
        let s = SplineBasisSpec::default();
        Self { quantiles: None, interior: None, lower: None, upper: None, degree: s.degree, include_intercept: s.include_intercept }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self { iterations: f.iterations, burn_in: f.burn_in, thin: f.thin, seed: f.seed, chains: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeSection {
    /// Number of completed datasets.
    pub m: usize,
    pub seed: u64,
}

impl Default for ImputeSection {
    fn default() -> Self {
        Self { m: 100, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Replicated datasets for the posterior predictive checks.
    pub replicates: usize,
    pub replicate_mode: ReplicateMode,
    pub seed: u64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self { replicates: 500, replicate_mode: ReplicateMode::default(), seed: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub adjusters: Vec<String>,
    pub correlation: WorkingCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenSection {
    pub alpha: f64,
    /// Columns to test; all covariates when absent.
    pub candidates: Option<Vec<String>>,
}

impl Default for ScreenSection {
    fn default() -> Self {
        Self { alpha: 0.05, candidates: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub patients: Option<usize>,
    pub min_followup: Option<u32>,
    pub max_followup: Option<u32>,
    pub mechanism: Option<Mechanism>,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { patients: None, min_followup: None, max_followup: None, mechanism: None, seed: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSection,
    pub model: ModelSection,
    pub spline: SplineSection,
    pub mcmc: McmcSection,
    pub impute: ImputeSection,
    pub diagnose: DiagnoseSection,
    pub analysis: AnalysisSection,
    pub screen: ScreenSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Read a config file and make its paths absolute.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let base = base.canonicalize().map_err(|e| CliError::io(&base, e))?;
        if let Some(p) = &cfg.input.panel {
            cfg.input.panel = Some(base.join(p));
        }
        if let Some(d) = &cfg.output.dir {
            cfg.output.dir = Some(base.join(d));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that depend on which command will read the configuration: the
    /// draws a chain retains bound the imputations and the replicates.
    pub fn validate_for(&self, command: Command) -> Result<(), CliError> {
        self.validate()?;
        let m = &self.mcmc;
        let retained = (m.iterations - m.burn_in) / m.thin;
        let stores_imputations = self.model.mode == Mode::Joint && matches!(command, Command::Fit | Command::Sweep);
        if (command == Command::Impute || stores_imputations) && self.impute.m > retained {
            return Err(bad("[impute] m", format!("asks for {} datasets but the chain retains only {retained} draws", self.impute.m)));
        }
        if command == Command::Diagnose && self.diagnose.replicates > retained {
            return Err(bad("[diagnose] replicates", format!("must be between 1 and the {retained} retained draws")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !self.input.delimiter.is_ascii() {
            return Err(bad("[input] delimiter", "must be a single ASCII character"));
        }
        if self.input.baseline_first_quarter > self.input.baseline_last_quarter {
            return Err(bad("[input] baseline_first_quarter", "must not exceed baseline_last_quarter"));
        }
        if self.model.classes == 0 {
            return Err(bad("[model] classes", "must be at least 1"));
        }
        if self.model.sweep.is_empty() {
            return Err(bad("[model] sweep", "must list at least one profile count"));
        }
        if self.model.sweep.contains(&0) {
            return Err(bad("[model] sweep", "profile counts must be at least 1"));
        }
        self.spline_spec()?.validate().map_err(|e| bad("[spline]", e))?;
        let m = &self.mcmc;
        if m.thin == 0 {
            return Err(bad("[mcmc] thin", "must be at least 1"));
        }
        if m.burn_in >= m.iterations {
            return Err(bad("[mcmc] burn_in", format!("({}) must be below iterations ({})", m.burn_in, m.iterations)));
        }
        if m.chains == 0 {
            return Err(bad("[mcmc] chains", "must be at least 1"));
        }
        if self.impute.m == 0 {
            return Err(bad("[impute] m", "must be at least 1"));
        }
        if self.diagnose.replicates == 0 {
            return Err(bad("[diagnose] replicates", "must be at least 1"));
        }
        if !(self.screen.alpha > 0.0 && self.screen.alpha < 1.0) {
            return Err(bad("[screen] alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// The input panel path; it must exist.
    pub fn panel_path(&self) -> Result<&Path, CliError> {
        let p = self.input.panel.as_deref().ok_or_else(|| bad("[input] panel", "is required by this command"))?;
        if !p.is_file() {
            return Err(bad("[input] panel", format!("file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn panel_config(&self) -> PanelConfig {
        PanelConfig {
            baseline_columns: self.input.baseline_columns.clone(),
            baseline_first_quarter: self.input.baseline_first_quarter,
            baseline_last_quarter: self.input.baseline_last_quarter,
        }
    }

    pub fn delimiter(&self) -> u8 {
        self.input.delimiter as u8
    }

    pub fn spline_spec(&self) -> Result<SplineBasisSpec, CliError> {
        let s = &self.spline;
        let knots = match (&s.quantiles, &s.interior) {
            (Some(_), Some(_)) => return Err(bad("[spline]", "give either quantiles or interior knots, not both")),
            (Some(q), None) => KnotPlacement::Quantiles(q.clone()),
            (None, Some(k)) => {
                let lower = s.lower.ok_or_else(|| bad("[spline] lower", "is required with explicit interior knots"))?;
                let upper = s.upper.ok_or_else(|| bad("[spline] upper", "is required with explicit interior knots"))?;
                KnotPlacement::Explicit { interior: k.clone(), lower, upper }
            }
            (None, None) => SplineBasisSpec::default().knots,
        };
        Ok(SplineBasisSpec { knots, degree: s.degree, include_intercept: s.include_intercept })
    }

    pub fn model_spec(&self, classes: usize) -> Result<ModelSpec, CliError> {
        let d = ModelSpec::default();
        Ok(ModelSpec {
            mode: self.model.mode,
            classes,
            allocation: self.model.allocation.clone(),
            outcome: self.model.outcome.resolve(&d.outcome),
            presence: self.model.presence.resolve(&d.presence),
            spline: self.spline_spec()?,
        })
    }

    pub fn fit_config(&self, classes: usize, chain: u64) -> FitConfig {
        FitConfig {
            classes,
            iterations: self.mcmc.iterations,
            burn_in: self.mcmc.burn_in,
            thin: self.mcmc.thin,
            seed: self.mcmc.seed,
            chain,
            stored_imputations: match self.model.mode {
                Mode::Joint => self.impute.m,
                Mode::Marginal => 0,
            },
            frozen: Default::default(),
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let s = &self.simulate;
        let mut g = GeneratorConfig::preset(s.seed);
        if let Some(n) = s.patients {
            g.patients = n;
        }
        if let Some(t) = s.min_followup {
            g.min_followup = t;
        }
        if let Some(t) = s.max_followup {
            g.max_followup = t;
        }
        if let Some(m) = &s.mechanism {
            g.mechanism = m.clone();
        }
        g
    }
}
