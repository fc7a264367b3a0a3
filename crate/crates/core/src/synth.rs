//! Synthetic cohorts drawn from the latent-profile model family, with a
//! known ground truth and a choice of missingness mechanism.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::A1cCategory;
use crate::error::{Error, Result};
use crate::linalg::{logistic, ols};
use crate::model::allocation_probs;
use crate::panel::{build_panel, quarter_time, KnotPlacement, Panel, PanelConfig, RawRecord, RawTable, SplineBasis, SplineBasisSpec};
use crate::rng::RngStream;

pub const BASELINE_COLUMNS: [&str; 2] = ["z", "female"];
pub const TIME_VARYING_COLUMNS: [&str; 2] = ["age", "visits"];

/// How outcome cells go missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Each cell missing independently with probability `missing`.
    Mcar { missing: f64 },
    /// Presence logit `intercept + visits * visits + age * (age - 60) / 10`.
    Mar { intercept: f64, visits: f64, age: f64 },
    /// Presence logit `intercept + visits * visits + class_intercepts[c] + e_i`
    /// with `e_i ~ N(0, random_var)`.
    Latent { intercept: f64, visits: f64, class_intercepts: Vec<f64>, random_var: f64 },
}

/// Event logit `intercept + category_effects[k] + class_effects[c]`, where
/// `k` is the outcome category of the true value (0 = reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventModel {
    pub intercept: f64,
    pub category_effects: Vec<f64>,
    pub class_effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub patients: usize,
    pub min_followup: u32,
    pub max_followup: u32,
    /// Allocation coefficients over `(1, z, female)`, one row per class; row 0 zero.
    pub allocation_coef: DMatrix<f64>,
    /// Fixed effects over `(1, age, visits)`.
    pub fixed_effects: DVector<f64>,
    /// Spline coefficients per class; row 0 zero.
    pub profile_effects: DMatrix<f64>,
    pub noise_var: Vec<f64>,
    pub random_var: f64,
    pub spline: SplineBasisSpec,
    pub mechanism: Mechanism,
    pub events: EventModel,
    pub seed: u64,
}

/// Everything the generator knows that the panel does not show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub random_effects: Vec<f64>,
    pub presence_random_effects: Vec<f64>,
    /// Unmasked follow-up outcomes, aligned with the panel's patients.
    pub outcomes: Vec<Vec<f64>>,
    pub config: GeneratorConfig,
}

impl GroundTruth {
    /// The panel with every follow-up outcome restored.
    pub fn complete_panel(&self, panel: &Panel) -> Result<Panel> {
        panel.with_outcomes(&self.outcomes)
    }
}

/// Class mean trajectories used by the preset, on a rescaled time `s` in [0, 1].
fn preset_target(class: usize, s: f64) -> f64 {
    match class {
        0 => 0.0,
        1 => 1.6 * (1.0 - (-6.0 * s).exp()),
        _ => -1.6 * (std::f64::consts::PI * s).sin().powf(0.6),
    }
}

/// Least-squares spline coefficients approximating `f` over the basis range.
pub fn fit_trajectory(basis: &SplineBasis, f: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
    let grid: Vec<f64> = (0..=400).map(|k| basis.lower + (basis.upper - basis.lower) * k as f64 / 400.0).collect();
    let x = basis.matrix(&grid);
    let y = DVector::from_iterator(grid.len(), grid.iter().map(|t| f((t - basis.lower) / (basis.upper - basis.lower))));
    Ok(ols(&x, &y, 0.0)?.coef)
}

impl GeneratorConfig {
    /// Three well-separated profiles (flat, rising, U-shaped), about half
    /// the cells missing completely at random.
    pub fn preset(seed: u64) -> Self {
        let spline = Self::preset_spline();
        let basis = spline.resolve(&[]).expect("explicit knots resolve");
        let mut profile = DMatrix::zeros(3, basis.ncols());
        for c in 1..3 {
            let coef = fit_trajectory(&basis, |s| preset_target(c, s)).expect("trajectory fit");
            profile.set_row(c, &coef.transpose());
        }
        Self {
            patients: 500,
            min_followup: 12,
            max_followup: 40,
            allocation_coef: DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.2, 0.5, -0.3, -0.1, -0.4, 0.3]),
            fixed_effects: DVector::from_vec(vec![6.2, 0.015, 0.05]),
            profile_effects: profile,
            noise_var: vec![0.05, 0.08, 0.06],
            random_var: 0.05,
            spline,
            mechanism: Mechanism::Mcar { missing: 0.5 },
            events: EventModel {
                intercept: -2.2,
                category_effects: vec![0.1, 0.25, 0.4, 0.55, 0.75, 1.0],
                class_effects: vec![0.0, 0.6, -0.6],
            },
            seed,
        }
    }

    pub fn preset_spline() -> SplineBasisSpec {
        SplineBasisSpec {
            knots: KnotPlacement::Explicit { interior: vec![1.5, 2.25, 3.0, 4.5, 6.5, 8.5], lower: 1.25, upper: 11.0 },
            degree: 3,
            include_intercept: false,
        }
    }

    pub fn classes(&self) -> usize {
        self.allocation_coef.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.classes();
        if self.patients == 0 || l == 0 {
            return Err(Error::config("generator needs at least one patient and one class"));
        }
        if self.min_followup == 0 || self.min_followup > self.max_followup {
            return Err(Error::config("follow-up length range is empty"));
        }
        if self.allocation_coef.ncols() != 3 || self.fixed_effects.len() != 3 {
            return Err(Error::config("generator allocation design is (1, z, female) and fixed design is (1, age, visits)"));
        }
        if self.profile_effects.nrows() != l || self.noise_var.len() != l || self.events.class_effects.len() != l {
            return Err(Error::config("per-class generator parameters disagree on the number of classes"));
        }
        if self.events.category_effects.len() != 6 {
            return Err(Error::config("event model needs six non-reference category effects"));
        }
        if self.noise_var.iter().any(|v| !(*v > 0.0)) || self.random_var < 0.0 {
            return Err(Error::config("variances must be positive"));
        }
        match &self.mechanism {
            Mechanism::Mcar { missing } if !(0.0..=1.0).contains(missing) => {
                return Err(Error::config("missing probability must lie in [0, 1]"));
            }
            Mechanism::Latent { class_intercepts, random_var, .. } if class_intercepts.len() != l || *random_var < 0.0 => {
                return Err(Error::config("latent mechanism needs one intercept per class and a nonnegative variance"));
            }
            _ => {}
        }
        let basis = self.spline.resolve(&[])?;
        if basis.ncols() != self.profile_effects.ncols() {
            return Err(Error::config("profile effects do not match the spline basis width"));
        }
        Ok(())
    }
}

struct Draft {
    id: String,
    class: usize,
    b: f64,
    e: f64,
    z: f64,
    female: f64,
    baseline_age: f64,
    quarters: Vec<u32>,
    visits: Vec<f64>,
    outcomes: Vec<f64>,
    baseline_outcome: f64,
    events: Vec<bool>,
}

/// Generate a panel and its ground truth.
pub fn generate(config: &GeneratorConfig) -> Result<(Panel, GroundTruth)> {
    config.validate()?;
    let basis = config.spline.resolve(&[])?;
    let stream = RngStream::new(config.seed, 0x5157);
    let l = config.classes();
    let drafts: Vec<Draft> = (0..config.patients)
        .map(|i| {
            let mut rng = stream.substream(&[i as u64]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let female = if Bernoulli::new(0.5).expect("valid").sample(&mut rng) { 1.0 } else { 0.0 };
            let x0 = DVector::from_vec(vec![1.0, z, female]);
            let probs = allocation_probs(&x0, &config.allocation_coef)?;
            let class = crate::samplers::sample_categorical(&probs, &mut rng)?;
            let b = config.random_var.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let e = match &config.mechanism {
                Mechanism::Latent { random_var, .. } => random_var.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng),
                _ => 0.0,
            };
            let t_i = rng.random_range(config.min_followup..=config.max_followup);
            let baseline_age = rng.random_range(40.0..80.0);
            let quarters: Vec<u32> = (5..5 + t_i).collect();
            let pois = Poisson::new(1.0).expect("valid rate");
            let visits: Vec<f64> = quarters.iter().map(|_| pois.sample(&mut rng)).collect();
            let noise = Normal::new(0.0, config.noise_var[class].sqrt()).expect("valid sd");
            let mean_at = |q: u32, v: f64, c: Option<usize>| -> f64 {
                let age = baseline_age + quarter_time(q);
                let mut m = config.fixed_effects[0] + config.fixed_effects[1] * age + config.fixed_effects[2] * v + b;
                if let Some(c) = c {
                    let row = basis.eval(quarter_time(q));
                    m += row.iter().zip(config.profile_effects.row(c).iter()).map(|(a, b)| a * b).sum::<f64>();
                }
                m
            };
            let outcomes: Vec<f64> = quarters.iter().zip(&visits).map(|(&q, &v)| mean_at(q, v, Some(class)) + noise.sample(&mut rng)).collect();
            let baseline_outcome = mean_at(4, 1.0, None) + noise.sample(&mut rng);
            let events = outcomes
                .iter()
                .map(|&y| {
                    let k = A1cCategory::of(y.max(f64::MIN_POSITIVE)).map_or(0, |c| c.index());
                    let mut logit = config.events.intercept + config.events.class_effects[class];
                    if k > 0 {
                        logit += config.events.category_effects[k - 1];
                    }
                    rng.random::<f64>() < logistic(logit)
                })
                .collect();
            Ok(Draft { id: format!("p{i:06}"), class, b, e, z, female, baseline_age, quarters, visits, outcomes, baseline_outcome, events })
        })
        .collect::<Result<_>>()?;

    // Presence mask.
    let mask_stream = stream.child(1);
    let present: Vec<Vec<bool>> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = mask_stream.substream(&[i as u64]);
            d.quarters
                .iter()
                .zip(&d.visits)
                .map(|(&q, &v)| {
                    let p = match &config.mechanism {
                        Mechanism::Mcar { missing } => 1.0 - missing,
                        Mechanism::Mar { intercept, visits, age } => {
                            let a = (d.baseline_age + quarter_time(q) - 60.0) / 10.0;
                            logistic(intercept + visits * v + age * a)
                        }
                        Mechanism::Latent { intercept, visits, class_intercepts, .. } => {
                            logistic(intercept + visits * v + class_intercepts[d.class] + d.e)
                        }
                    };
                    rng.random::<f64>() < p
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    for (d, pres) in drafts.iter().zip(&present) {
        let covs = |q: u32, v: f64| vec![Some(d.z), Some(d.female), Some(d.baseline_age + quarter_time(q)), Some(v)];
        records.push(RawRecord {
            patient_id: d.id.clone(),
            quarter: 4,
            outcome: Some(d.baseline_outcome),
            event: false,
            day: None,
            covariates: covs(4, 1.0),
            source_row: records.len() + 1,
        });
        for (k, &q) in d.quarters.iter().enumerate() {
            records.push(RawRecord {
                patient_id: d.id.clone(),
                quarter: q,
                outcome: pres[k].then_some(d.outcomes[k]),
                event: d.events[k],
                day: None,
                covariates: covs(q, d.visits[k]),
                source_row: records.len() + 1,
            });
        }
    }
    let mut names: Vec<String> = BASELINE_COLUMNS.iter().map(|s| s.to_string()).collect();
    names.extend(TIME_VARYING_COLUMNS.iter().map(|s| s.to_string()));
    let table = RawTable { covariate_names: names, has_day: false, records };
    let panel_config = PanelConfig { baseline_columns: BASELINE_COLUMNS.iter().map(|s| s.to_string()).collect(), ..Default::default() };
    let panel = build_panel(&table, &panel_config)?;

    let by_id: std::collections::HashMap<&str, &Draft> = drafts.iter().map(|d| (d.id.as_str(), d)).collect();
    let kept: Vec<&Draft> = panel.patients.iter().map(|p| by_id[p.id.as_str()]).collect();
    if kept.is_empty() {
        return Err(Error::data("every generated patient was excluded"));
    }
    let seen: std::collections::BTreeSet<usize> = kept.iter().map(|d| d.class).collect();
    if seen.len() < l {
        return Err(Error::data("a generated class has no patients; increase the cohort size"));
    }
    let truth = GroundTruth {
        ids: kept.iter().map(|d| d.id.clone()).collect(),
        labels: kept.iter().map(|d| d.class).collect(),
        random_effects: kept.iter().map(|d| d.b).collect(),
        presence_random_effects: kept.iter().map(|d| d.e).collect(),
        outcomes: kept.iter().map(|d| d.outcomes.clone()).collect(),
        config: config.clone(),
    };
    Ok((panel, truth))
}

/// Mask a fully observed panel with `mechanism`, using the true classes for
/// the latent mechanism. Patients left with no observed follow-up keep
/// their first cell so the panel stays valid.
pub fn mask_panel(full: &Panel, truth: &GroundTruth, mechanism: &Mechanism, seed: u64) -> Result<Panel> {
    let stream = RngStream::new(seed, 0x4D41);
    let age_idx = full.time_varying_index("age");
    let visits_idx = full.time_varying_index("visits");
    let mut out = full.clone();
    for (i, p) in out.patients.iter_mut().enumerate() {
        let mut rng = stream.substream(&[i as u64]);
        let e = match mechanism {
            Mechanism::Latent { random_var, .. } => random_var.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng),
            _ => 0.0,
        };
        for r in p.followup.iter_mut() {
            let v = visits_idx.map_or(0.0, |k| r.time_varying[k]);
            let prob = match mechanism {
                Mechanism::Mcar { missing } => 1.0 - missing,
                Mechanism::Mar { intercept, visits, age } => {
                    let a = age_idx.map_or(0.0, |k| (r.time_varying[k] - 60.0) / 10.0);
                    logistic(intercept + visits * v + age * a)
                }
                Mechanism::Latent { intercept, visits, class_intercepts, .. } => {
                    logistic(intercept + visits * v + class_intercepts[truth.labels[i]] + e)
                }
            };
            if rng.random::<f64>() >= prob {
                r.outcome = None;
            }
        }
        if p.n_observed() == 0 {
            p.followup[0].outcome = Some(truth.outcomes[i][0]);
        }
    }
    Ok(out)
}
