use nalgebra::{DMatrix, DVector};

use crate::gibbs::{PosteriorArchive, PresenceDraw, RetainedDraw};
use crate::model::{AllocationParams, ModelData, OutcomeParams, PresenceParams};

/// Average profile-design row over every observed cell.
fn mean_profile_row(data: &ModelData) -> DVector<f64> {
    let q = data.dims.profile;
    let mut sum = DVector::zeros(q);
    let mut n = 0usize;
    for p in &data.patients {
        for r in 0..p.observed.len() {
            sum += p.observed.profile.row(r).transpose();
            n += 1;
        }
    }
    if n > 0 {
        sum /= n as f64;
    }
    sum
}

/// Mean fitted profile contribution of each class over the observed cells.
pub fn class_levels(data: &ModelData, profile_effects: &DMatrix<f64>) -> Vec<f64> {
    let s = mean_profile_row(data);
    (0..profile_effects.nrows()).map(|l| profile_effects.row(l).transpose().dot(&s)).collect()
}

/// For each draw, `perm[old] = new` so that new labels ascend by level.
pub fn relabel_by_level(archive: &PosteriorArchive, data: &ModelData) -> Vec<Vec<usize>> {
    let s = mean_profile_row(data);
    archive
        .draws
        .iter()
        .map(|d| {
            let levels: Vec<f64> = (0..d.profile_effects.nrows()).map(|l| d.profile_effects.row(l).transpose().dot(&s)).collect();
            let mut order: Vec<usize> = (0..levels.len()).collect();
            order.sort_by(|a, b| levels[*a].total_cmp(&levels[*b]).then(a.cmp(b)));
            let mut perm = vec![0; levels.len()];
            for (new, &old) in order.iter().enumerate() {
                perm[old] = new;
            }
            perm
        })
        .collect()
}

fn permute_rows(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (old, &new) in perm.iter().enumerate() {
        out.set_row(new, &m.row(old));
    }
    out
}

/// A draw with its class labels permuted. Allocation coefficients are
/// re-referenced so the new class 0 row is zero.
pub fn relabel_draw(d: &RetainedDraw, perm: &[usize]) -> RetainedDraw {
    let mut coef = permute_rows(&d.alloc.coef, perm);
    let base = coef.row(0).clone_owned();
    for mut r in coef.row_iter_mut() {
        r -= &base;
    }
    let mut noise = d.noise_var.clone();
    for (old, &new) in perm.iter().enumerate() {
        noise[new] = d.noise_var[old];
    }
    RetainedDraw {
        iteration: d.iteration,
        alloc: AllocationParams { coef },
        fixed_effects: d.fixed_effects.clone(),
        profile_effects: permute_rows(&d.profile_effects, perm),
        noise_var: noise,
        random_cov: d.random_cov.clone(),
        presence: d.presence.as_ref().map(|p| PresenceDraw {
            fixed_effects: p.fixed_effects.clone(),
            profile_effects: permute_rows(&p.profile_effects, perm),
            random_cov: p.random_cov.clone(),
        }),
        allocation: d.allocation.iter().map(|&c| perm[c]).collect(),
        random_effects: d.random_effects.clone(),
        presence_random_effects: d.presence_random_effects.clone(),
        loglik: d.loglik.clone(),
    }
}

/// Draws relabeled by ascending class level.
pub fn relabeled_draws(archive: &PosteriorArchive, data: &ModelData) -> Vec<RetainedDraw> {
    relabel_by_level(archive, data).iter().zip(&archive.draws).map(|(p, d)| relabel_draw(d, p)).collect()
}

/// Most frequent class of each patient across draws (ties go to the lower label).
pub fn modal_allocation(draws: &[RetainedDraw], classes: usize) -> Vec<usize> {
    let n = draws.first().map_or(0, |d| d.allocation.len());
    (0..n)
        .map(|i| {
            let mut counts = vec![0usize; classes];
            for d in draws {
                counts[d.allocation[i]] += 1;
            }
            let mut best = 0;
            for (l, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Posterior means of every parameter block over already relabeled draws.
#[derive(Debug, Clone)]
pub struct PosteriorMeans {
    pub alloc: AllocationParams,
    pub outcome: OutcomeParams,
    pub presence: Option<PresenceParams>,
}

pub fn posterior_means(draws: &[RetainedDraw]) -> Option<PosteriorMeans> {
    let first = draws.first()?;
    let k = draws.len() as f64;
    let mean_m = |f: &dyn Fn(&RetainedDraw) -> DMatrix<f64>| -> DMatrix<f64> { draws.iter().skip(1).fold(f(first), |acc, d| acc + f(d)) / k };
    let mean_v = |f: &dyn Fn(&RetainedDraw) -> DVector<f64>| -> DVector<f64> { draws.iter().skip(1).fold(f(first), |acc, d| acc + f(d)) / k };
    let presence = first.presence.as_ref().map(|_| PresenceParams {
        fixed_effects: mean_v(&|d| d.presence.as_ref().expect("joint draw").fixed_effects.clone()),
        profile_effects: mean_m(&|d| d.presence.as_ref().expect("joint draw").profile_effects.clone()),
        random_cov: mean_m(&|d| d.presence.as_ref().expect("joint draw").random_cov.clone()),
        random_effects: mean_m(&|d| d.presence_random_effects.clone().unwrap_or_else(|| DMatrix::zeros(0, 0))),
    });
    Some(PosteriorMeans {
        alloc: AllocationParams { coef: mean_m(&|d| d.alloc.coef.clone()) },
        outcome: OutcomeParams {
            fixed_effects: mean_v(&|d| d.fixed_effects.clone()),
            profile_effects: mean_m(&|d| d.profile_effects.clone()),
            noise_var: mean_v(&|d| d.noise_var.clone()),
            random_cov: mean_m(&|d| d.random_cov.clone()),
            random_effects: mean_m(&|d| d.random_effects.clone()),
        },
        presence,
    })
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
/// Two identical single-cluster labelings score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(a.len());
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
