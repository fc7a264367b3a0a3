use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::blocks::{draw_missing, Block};
use crate::error::Result;
use crate::linalg::{logistic_irls, ols, spd_inverse};
use crate::model::{AllocationParams, ChainState, Mode, ModelData, OutcomeParams, PresenceParams};
use crate::rng::RngStream;

const START_SCALE: f64 = 0.1;

fn stacked_observed(data: &ModelData) -> (DMatrix<f64>, DVector<f64>) {
    let (p, q) = (data.dims.fixed, data.dims.profile);
    let n_obs = data.n_observed();
    let mut x = DMatrix::zeros(n_obs, p + q);
    let mut y = DVector::zeros(n_obs);
    let mut row = 0;
    for pd in &data.patients {
        let b = &pd.observed;
        for (k, &j) in b.rows.iter().enumerate() {
            x.view_mut((row, 0), (1, p)).copy_from(&b.fixed.row(k));
            x.view_mut((row, p), (1, q)).copy_from(&b.profile.row(k));
            y[row] = pd.outcome[j].expect("observed row");
            row += 1;
        }
    }
    (x, y)
}

/// Ridge penalty for the per-patient profile fits that feed the clustering.
const FEATURE_RIDGE: f64 = 1.0;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERATIONS: usize = 100;

/// Each patient's residual trajectory after the pooled fit, summarized by
/// its ridge-shrunk coefficients on the profile basis.
fn trajectory_features(data: &ModelData, pooled: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = (data.dims.fixed, data.dims.profile);
    let beta = pooled.rows(0, p);
    let common = pooled.rows(p, q);
    let mut features = DMatrix::zeros(data.patients.len(), q);
    for (i, pd) in data.patients.iter().enumerate() {
        let b = &pd.observed;
        if b.is_empty() {
            continue;
        }
        let resid = pd.observed_outcome() - &b.fixed * beta - &b.profile * common;
        let gram = &b.profile_profile + DMatrix::identity(q, q) * FEATURE_RIDGE;
        let coef = spd_inverse(&gram)? * b.profile.tr_mul(&resid);
        features.set_row(i, &coef.transpose());
    }
    Ok(features)
}

fn nearest(x: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    (0..centers.nrows())
        .map(|c| (c, (x.row(i) - centers.row(c)).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one center")
}

/// Lloyd's algorithm from a k-means++ start; returns labels and the
/// within-cluster sum of squares.
fn kmeans_once<R: Rng>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> (Vec<usize>, f64) {
    let n = x.nrows();
    let mut centers = DMatrix::zeros(k, x.ncols());
    centers.set_row(0, &x.row(rng.random_range(0..n)));
    for c in 1..k {
        let d: Vec<f64> = (0..n).map(|i| (0..c).map(|j| (x.row(i) - centers.row(j)).norm_squared()).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d.iter().position(|v| {
                acc += v;
                acc >= u
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &x.row(pick));
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERATIONS {
        let next: Vec<usize> = (0..n).map(|i| nearest(x, i, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if !members.is_empty() {
                let sum = members.iter().fold(DVector::zeros(x.ncols()), |acc, &i| acc + x.row(i).transpose());
                centers.set_row(c, &(sum / members.len() as f64).transpose());
            }
        }
    }
    let within = (0..n).map(|i| nearest(x, i, &centers).1).sum();
    (labels, within)
}

fn kmeans<R: Rng>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    if k == 1 || x.nrows() <= k {
        return (0..x.nrows()).map(|i| i % k).collect();
    }
    (0..KMEANS_RESTARTS)
        .map(|_| kmeans_once(x, k, rng))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(labels, _)| labels)
        .expect("at least one restart")
}

/// Least squares with one profile block per occupied non-reference class.
/// Returns the fixed effects, the profile effects and the residual sum of squares.
fn class_least_squares(data: &ModelData, labels: &[usize], pooled: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let (p, q, l) = (data.dims.fixed, data.dims.profile, data.dims.classes);
    let occupied: Vec<usize> = (1..l).filter(|c| labels.contains(c)).collect();
    let (x, y) = stacked_observed(data);
    let k = p + q * occupied.len();
    let mut design = DMatrix::zeros(x.nrows(), k);
    let mut row = 0;
    for (pd, &c) in data.patients.iter().zip(labels) {
        for _ in 0..pd.observed.len() {
            design.view_mut((row, 0), (1, p)).copy_from(&x.view((row, 0), (1, p)));
            if let Some(slot) = occupied.iter().position(|&o| o == c) {
                design.view_mut((row, p + slot * q), (1, q)).copy_from(&x.view((row, p), (1, q)));
            }
            row += 1;
        }
    }
    let fit = ols(&design, &y, 1e-6)?;
    let mut profile_effects = DMatrix::zeros(l, q);
    for c in 1..l {
        match occupied.iter().position(|&o| o == c) {
            Some(slot) => profile_effects.set_row(c, &fit.coef.rows(p + slot * q, q).transpose()),
            None => profile_effects.set_row(c, &pooled.rows(p, q).transpose()),
        }
    }
    let rss = (&y - &design * &fit.coef).norm_squared();
    Ok((fit.coef.rows(0, p).into_owned(), profile_effects, rss))
}

/// The reference class has no profile of its own, so the cluster labelled 0
/// matters: try each cluster in that role and keep the best least-squares fit.
fn choose_reference(data: &ModelData, labels: Vec<usize>, pooled: &DVector<f64>) -> Result<(Vec<usize>, DVector<f64>, DMatrix<f64>)> {
    let mut best: Option<(f64, Vec<usize>, DVector<f64>, DMatrix<f64>)> = None;
    for r in 0..data.dims.classes {
        let swapped: Vec<usize> = labels.iter().map(|&c| if c == r { 0 } else if c == 0 { r } else { c }).collect();
        let (fixed, profile, rss) = class_least_squares(data, &swapped, pooled)?;
        if best.as_ref().is_none_or(|b| rss < b.0) {
            best = Some((rss, swapped, fixed, profile));
        }
    }
    let (_, labels, fixed, profile) = best.expect("at least one class");
    Ok((labels, fixed, profile))
}

/// Starting state. Patients are clustered by their residual trajectories
/// after a pooled least-squares fit; the clusters give the starting labels
/// and a class-specific least-squares fit gives the outcome coefficients.
/// Allocation coefficients start at zero and variances small.
///
/// The sampler cannot move the reference role from one group of patients to
/// another, so a start with the wrong group in that role stays in a poor mode
/// where the fixed effects and random effects absorb its missing profile.
pub fn init_state(data: &ModelData, stream: &RngStream) -> Result<ChainState> {
    let dims = data.dims;
    let (n, l, r) = (dims.patients, dims.classes, dims.random);
    let (x, y) = stacked_observed(data);
    let pooled = ols(&x, &y, 1e-6)?;
    if pooled.ridged {
        log::warn!("initial least-squares fit is rank deficient; used a ridge penalty of 1e-6");
    }

    let mut rng = stream.substream(&[0, Block::Init as u64]);
    let features = trajectory_features(data, &pooled.coef)?;
    let clusters = kmeans(&features, l, &mut rng);
    let (allocation, fixed_effects, profile_effects) = choose_reference(data, clusters, &pooled.coef)?;
    let sd = START_SCALE.sqrt();
    let random_effects = DMatrix::from_fn(n, r, |_, _| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng));

    let outcome = OutcomeParams {
        fixed_effects,
        profile_effects,
        noise_var: DVector::from_element(l, START_SCALE),
        random_cov: DMatrix::identity(r, r) * START_SCALE,
        random_effects,
    };

    let presence = match (data.mode, dims.presence) {
        (Mode::Joint, Some((pf, pp, pr))) => {
            // Pooled logistic fit of presence on the fixed presence design.
            let total = data.n_rows();
            let mut bx = DMatrix::zeros(total, pf);
            let mut br = DVector::zeros(total);
            let mut row = 0;
            for pd in &data.patients {
                let pres = pd.presence.as_ref().expect("joint data has presence designs");
                for j in 0..pd.n_rows() {
                    bx.row_mut(row).copy_from(&pres.fixed.row(j));
                    br[row] = pres.present[j];
                    row += 1;
                }
            }
            let fixed_effects = match logistic_irls(&bx, &br, 50, 1e-8) {
                Ok(f) if f.converged && f.coef.iter().all(|v| v.is_finite()) => f.coef,
                _ => DVector::zeros(pf),
            };
            Some(PresenceParams {
                fixed_effects,
                profile_effects: DMatrix::zeros(l, pp),
                random_effects: DMatrix::zeros(n, pr),
                random_cov: DMatrix::identity(pr, pr) * START_SCALE,
            })
        }
        _ => None,
    };

    let pg_presence = match data.mode {
        Mode::Joint => data.patients.iter().map(|pd| vec![0.25; pd.n_rows()]).collect(),
        Mode::Marginal => Vec::new(),
    };

    let mut state = ChainState {
        allocation,
        alloc: AllocationParams::zeros(l, dims.allocation),
        outcome,
        presence,
        pg_alloc: DMatrix::from_element(n, l, 0.25),
        pg_presence,
        imputed: None,
    };
    if data.mode == Mode::Joint {
        let mut imputed = Vec::with_capacity(n);
        for (i, pd) in data.patients.iter().enumerate() {
            let mut prng = stream.substream(&[0, Block::Imputation as u64, i as u64]);
            imputed.push(draw_missing(pd, &state.outcome, state.allocation[i], &state.random_effect(i), &mut prng)?);
        }
        state.imputed = Some(imputed);
    }
    Ok(state)
}
