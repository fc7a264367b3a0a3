//! Shared helpers: outcome reporting, moment checks, small cohorts.

use nalgebra::{DMatrix, DVector};
use profimpute::model::{DesignColumns, Mode, ModelSpec};
use profimpute::synth::{GeneratorConfig, Mechanism};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

/// Collects standardized deviations against a common limit.
pub struct Checks {
    pub limit: f64,
    pub count: usize,
    pub worst: (f64, String),
    pub failures: Vec<String>,
}

impl Checks {
    pub fn new(limit: f64) -> Self {
        Self { limit, count: 0, worst: (0.0, String::new()), failures: Vec::new() }
    }

    /// Record `|estimate - target| / se`.
    pub fn z(&mut self, label: &str, estimate: f64, target: f64, se: f64) {
        self.count += 1;
        let z = if se > 0.0 { (estimate - target).abs() / se } else if estimate == target { 0.0 } else { f64::INFINITY };
        if z > self.worst.0 || !z.is_finite() {
            self.worst = (z, label.to_string());
        }
        if !(z <= self.limit) {
            self.failures.push(format!("{label}: estimate {estimate:.6} target {target:.6} se {se:.2e} (|z| = {z:.2})"));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} moment checks, max |z| = {:.2} at {} (limit {})", self.count, self.worst.0, self.worst.1, self.limit);
        if !self.failures.is_empty() {
            s += &format!("; {} over the limit, first: {}", self.failures.len(), self.failures[0]);
        }
        s
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Mean vector and covariance of draws checked against a known mean and
/// covariance. Mean errors use the known covariance; covariance errors use
/// the spread of the centred products.
pub fn check_moments(checks: &mut Checks, label: &str, draws: &[DVector<f64>], target_mean: &DVector<f64>, target_cov: &DMatrix<f64>) {
    let n = draws.len() as f64;
    let k = target_mean.len();
    let m = draws.iter().fold(DVector::zeros(k), |a, d| a + d) / n;
    for a in 0..k {
        checks.z(&format!("{label} mean[{a}]"), m[a], target_mean[a], (target_cov[(a, a)] / n).sqrt());
    }
    for a in 0..k {
        for b in a..k {
            let prods: Vec<f64> = draws.iter().map(|d| (d[a] - m[a]) * (d[b] - m[b])).collect();
            let c = prods.iter().sum::<f64>() / (n - 1.0);
            checks.z(&format!("{label} cov[{a},{b}]"), c, target_cov[(a, b)], variance(&prods).sqrt() / n.sqrt());
        }
    }
}

pub fn check_scalar(checks: &mut Checks, label: &str, draws: &[f64], target_mean: f64, target_var: f64) {
    let n = draws.len() as f64;
    let m = mean(draws);
    checks.z(&format!("{label} mean"), m, target_mean, (target_var / n).sqrt());
    let sq: Vec<f64> = draws.iter().map(|d| (d - m) * (d - m)).collect();
    checks.z(&format!("{label} var"), variance(draws), target_var, variance(&sq).sqrt() / n.sqrt());
}

/// Inverse-Wishart draws checked entrywise against their mean and variance.
pub fn check_inverse_wishart(checks: &mut Checks, label: &str, draws: &[DMatrix<f64>], dof: f64, scale: &DMatrix<f64>) {
    let p = scale.nrows() as f64;
    let k = scale.nrows();
    for a in 0..k {
        for b in a..k {
            let v: Vec<f64> = draws.iter().map(|d| d[(a, b)]).collect();
            let target_mean = scale[(a, b)] / (dof - p - 1.0);
            let num = (dof - p + 1.0) * scale[(a, b)].powi(2) + (dof - p - 1.0) * scale[(a, a)] * scale[(b, b)];
            let target_var = num / ((dof - p) * (dof - p - 1.0).powi(2) * (dof - p - 3.0));
            check_scalar(checks, &format!("{label}[{a},{b}]"), &v, target_mean, target_var);
        }
    }
}

pub fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("positive definite").inverse()
}

/// Pearson statistic and p-value for counts against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new(counts.len() as f64 - 1.0).expect("positive df");
    (stat, 1.0 - dist.cdf(stat))
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        p += 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// The preset generator cut down to its first `classes` profiles.
pub fn preset_with_classes(classes: usize, seed: u64) -> GeneratorConfig {
    let mut g = GeneratorConfig::preset(seed);
    g.allocation_coef = g.allocation_coef.rows(0, classes).into_owned();
    g.profile_effects = g.profile_effects.rows(0, classes).into_owned();
    g.noise_var.truncate(classes);
    g.events.class_effects.truncate(classes);
    if let Mechanism::Latent { class_intercepts, .. } = &mut g.mechanism {
        class_intercepts.truncate(classes);
    }
    g
}

/// The model the preset generator draws from.
pub fn preset_model(mode: Mode, classes: usize) -> ModelSpec {
    ModelSpec {
        mode,
        classes,
        allocation: strings(&["z", "female"]),
        outcome: DesignColumns { fixed: strings(&["1", "age", "visits"]), profile: strings(&["spline"]), random: strings(&["1"]) },
        presence: DesignColumns { fixed: strings(&["1", "visits"]), profile: strings(&["1"]), random: strings(&["1"]) },
        spline: GeneratorConfig::preset_spline(),
    }
}

pub fn model(mode: Mode, classes: usize, allocation: &[&str], outcome: [&[&str]; 3], presence: [&[&str]; 3]) -> ModelSpec {
    ModelSpec {
        mode,
        classes,
        allocation: strings(allocation),
        outcome: DesignColumns { fixed: strings(outcome[0]), profile: strings(outcome[1]), random: strings(outcome[2]) },
        presence: DesignColumns { fixed: strings(presence[0]), profile: strings(presence[1]), random: strings(presence[2]) },
        spline: GeneratorConfig::preset_spline(),
    }
}

pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Run configuration for the preset model, with `extra` TOML appended.
/// `panel` is the absolute path of the input panel.
pub fn preset_config(panel: &std::path::Path, extra: &str) -> profimpute_cli::RunConfig {
    let text = format!(
        r#"
[input]
panel = "{}"
baseline_columns = ["z", "female"]

[model]
allocation = ["z", "female"]

[model.outcome]
fixed = ["1", "age", "visits"]
profile = ["spline"]
random = ["1"]

[model.presence]
fixed = ["1", "visits"]
profile = ["1"]
random = ["1"]

[spline]
interior = [1.5, 2.25, 3.0, 4.5, 6.5, 8.5]
lower = 1.25
upper = 11.0
{extra}
"#,
        panel.display()
    );
    profimpute_cli::RunConfig::parse(&text).expect("valid config")
}
