use std::collections::BTreeMap;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{equally_spaced, PosteriorArchive};
use crate::model::ModelData;
use crate::panel::{quantile_type7, Panel};
use crate::rng::RngStream;
use crate::samplers::sample_mvn;

/// Two-sided posterior predictive probability. Ties count on neither side.
pub fn ppp(observed: f64, replicates: &[f64]) -> f64 {
    let above = replicates.iter().filter(|r| **r > observed).count();
    let below = replicates.iter().filter(|r| **r < observed).count();
    2.0 * above.min(below) as f64 / replicates.len() as f64
}

/// How random effects enter a replicated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateMode {
    /// Fresh random effects from their population distribution; the class
    /// and every other parameter come from the draw.
    #[default]
    FreshRandomEffects,
    /// The draw's own random effects.
    Conditional,
}

/// Replicated observed cells: `[replicate][patient][observed cell]`.
pub struct Replicates {
    pub draw_indices: Vec<usize>,
    pub values: Vec<Vec<Vec<f64>>>,
}

pub fn replicate_datasets(archive: &PosteriorArchive, data: &ModelData, count: usize, mode: ReplicateMode, stream: &RngStream) -> Result<Replicates> {
    if count == 0 {
        return Err(Error::config("at least one replicate is needed"));
    }
    if count > archive.len() {
        return Err(Error::config(format!("{count} replicates requested but only {} draws are retained", archive.len())));
    }
    if archive.dims != data.dims {
        return Err(Error::argument("archive and model data disagree in shape"));
    }
    let picks = equally_spaced(archive.len(), count)?;
    let values = picks
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let draw = &archive.draws[d];
            let params = draw.outcome_params();
            data.patients
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = stream.substream(&[k as u64, i as u64]);
                    let c = draw.allocation[i];
                    let b = match mode {
                        ReplicateMode::FreshRandomEffects => sample_mvn(&DVector::zeros(data.dims.random), &draw.random_cov, &mut rng)?,
                        ReplicateMode::Conditional => draw.random_effects.row(i).transpose(),
                    };
                    let mean = params.population_mean(&p.observed, c) + &p.observed.random * b;
                    let sd = draw.noise_var[c].sqrt();
                    Ok(mean.iter().map(|m| m + sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Replicates { draw_indices: picks, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Lower,
    Upper,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Lower, Statistic::Upper];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Lower => "2.5% percentile",
            Statistic::Upper => "97.5% percentile",
        }
    }

    fn eval(self, sorted: &[f64]) -> f64 {
        match self {
            Statistic::Mean => sorted.iter().sum::<f64>() / sorted.len() as f64,
            Statistic::Lower => quantile_type7(sorted, 0.025),
            Statistic::Upper => quantile_type7(sorted, 0.975),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Patient,
    Quarter,
}

/// One statistic for one patient or quarter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCheck {
    pub unit: String,
    pub statistic: Statistic,
    pub observed: f64,
    pub replicate_mean: f64,
    pub replicate_lower: f64,
    pub replicate_upper: f64,
    pub ppp: f64,
    #[serde(skip)]
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PppCount {
    pub unit: UnitKind,
    pub statistic: Statistic,
    pub units: usize,
    pub below_1pct: usize,
    pub below_5pct: usize,
}

impl PppCount {
    pub fn describe(&self) -> String {
        format!(
            "{:?} {}: number of below 1% ppp values = {}, below 5% = {} (of {})",
            self.unit,
            self.statistic.name(),
            self.below_1pct,
            self.below_5pct,
            self.units
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PppReport {
    pub replicates: usize,
    pub mode: ReplicateMode,
    pub patients: Vec<UnitCheck>,
    pub quarters: Vec<UnitCheck>,
    /// Patients with a single observed cell; only their mean is checked.
    pub percentile_skipped: Vec<String>,
    pub counts: Vec<PppCount>,
}

impl PppReport {
    /// Share of patient-level ppp values (all statistics) below `level`.
    pub fn patient_fraction_below(&self, level: f64) -> f64 {
        if self.patients.is_empty() {
            return 0.0;
        }
        self.patients.iter().filter(|u| u.ppp < level).count() as f64 / self.patients.len() as f64
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn check(unit: String, statistic: Statistic, observed: &[f64], reps: Vec<f64>) -> UnitCheck {
    let obs = statistic.eval(&sorted(observed.to_vec()));
    let s = sorted(reps.clone());
    UnitCheck {
        unit,
        statistic,
        observed: obs,
        replicate_mean: s.iter().sum::<f64>() / s.len() as f64,
        replicate_lower: quantile_type7(&s, 0.025),
        replicate_upper: quantile_type7(&s, 0.975),
        ppp: ppp(obs, &reps),
        replicates: reps,
    }
}

/// Patient- and quarter-level checks of the mean and the 2.5% and 97.5%
/// percentiles of the observed outcomes.
pub fn ppp_suite(archive: &PosteriorArchive, data: &ModelData, panel: &Panel, count: usize, mode: ReplicateMode, stream: &RngStream) -> Result<PppReport> {
    if panel.patients.len() != data.patients.len() {
        return Err(Error::argument("panel and model data disagree in patient count"));
    }
    let reps = replicate_datasets(archive, data, count, mode, stream)?;
    let observed: Vec<Vec<f64>> = data.patients.iter().map(|p| p.observed_outcome().iter().copied().collect()).collect();

    let mut patients = Vec::new();
    let mut skipped = Vec::new();
    for (i, p) in data.patients.iter().enumerate() {
        for stat in Statistic::ALL {
            if stat != Statistic::Mean && observed[i].len() < 2 {
                continue;
            }
            let r: Vec<f64> = reps.values.iter().map(|rep| stat.eval(&sorted(rep[i].clone()))).collect();
            patients.push(check(p.id.clone(), stat, &observed[i], r));
        }
        if observed[i].len() < 2 {
            skipped.push(p.id.clone());
        }
    }

    // Observed cells grouped by quarter: (patient, position among observed cells).
    let mut by_quarter: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, (p, pd)) in panel.patients.iter().zip(&data.patients).enumerate() {
        for (k, &row) in pd.observed.rows.iter().enumerate() {
            by_quarter.entry(p.followup[row].quarter).or_default().push((i, k));
        }
    }
    let mut quarters = Vec::new();
    for (q, cells) in &by_quarter {
        let obs: Vec<f64> = cells.iter().map(|&(i, k)| observed[i][k]).collect();
        for stat in Statistic::ALL {
            let r: Vec<f64> = reps.values.iter().map(|rep| stat.eval(&sorted(cells.iter().map(|&(i, k)| rep[i][k]).collect()))).collect();
            quarters.push(check(q.to_string(), stat, &obs, r));
        }
    }

    let mut counts = Vec::new();
    for (kind, units) in [(UnitKind::Patient, &patients), (UnitKind::Quarter, &quarters)] {
        for stat in Statistic::ALL {
            let vals: Vec<f64> = units.iter().filter(|u| u.statistic == stat).map(|u| u.ppp).collect();
            counts.push(PppCount {
                unit: kind,
                statistic: stat,
                units: vals.len(),
                below_1pct: vals.iter().filter(|p| **p < 0.01).count(),
                below_5pct: vals.iter().filter(|p| **p < 0.05).count(),
            });
        }
    }
    Ok(PppReport { replicates: count, mode, patients, quarters, percentile_skipped: skipped, counts })
}
