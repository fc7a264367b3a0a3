//! Every Gibbs block redrawn many times from one frozen state and compared
//! with its full conditional, computed here from dense formulas.

use nalgebra::{DMatrix, DVector};
use profimpute::gibbs::blocks::{
    update_allocation, update_fixed_effects, update_imputations, update_noise_variances, update_presence_auxiliaries, update_presence_covariance,
    update_presence_fixed, update_presence_profile, update_presence_random, update_profile_effects, update_random_covariance,
    update_random_effects,
};
use profimpute::gibbs::{init_state, sweep, FrozenBlocks};
use profimpute::model::{ChainState, Mode, ModelData, PriorSpec};
use profimpute::rng::RngStream;
use profimpute::synth::{generate, Mechanism};
use profimpute::Result;

use crate::common::{check_inverse_wishart, check_moments, check_scalar, model, preset_with_classes, spd_inverse, Checks, Outcome};

const REDRAWS: usize = 10_000;
const LIMIT: f64 = 4.0;

struct Frozen {
    data: ModelData,
    prior: PriorSpec,
    state: ChainState,
}

fn frozen(mode: Mode) -> Frozen {
    let mut g = preset_with_classes(2, 11);
    g.patients = 20;
    g.min_followup = 3;
    g.max_followup = 5;
    g.mechanism = Mechanism::Mcar { missing: 0.3 };
    let (panel, truth) = generate(&g).expect("generate");
    let spec = model(mode, 2, &["z"], [&["1", "age"], &["1", "time"], &["1", "time"]], [&["1", "visits"], &["1", "time"], &["1"]]);
    let (_, data) = spec.build(&panel).expect("model data");
    let prior = PriorSpec::default_for(&data.dims);
    let stream = RngStream::new(99, 0);
    let mut state = init_state(&data, &stream).expect("init");
    for t in 1..=30 {
        sweep(&mut state, &data, &prior, &stream, t, FrozenBlocks::default()).expect("sweep");
    }
    // A small cohort can empty a class; the true labels keep both populated.
    state.allocation = truth.labels.clone();
    Frozen { data, prior, state }
}

fn redraw<T>(state: &ChainState, block: impl Fn(&mut ChainState, &RngStream, u64) -> Result<()>, get: impl Fn(&ChainState) -> T) -> Vec<T> {
    let stream = RngStream::new(2024, 7);
    (0..REDRAWS)
        .map(|k| {
            let mut s = state.clone();
            block(&mut s, &stream, 1_000 + k as u64).expect("block");
            get(&s)
        })
        .collect()
}

/// Rows the outcome blocks condition on and the outcome over them.
fn active(f: &Frozen, i: usize) -> (Vec<usize>, DVector<f64>) {
    let pd = &f.data.patients[i];
    let mut full = Vec::with_capacity(pd.outcome.len());
    let mut k = 0;
    for y in &pd.outcome {
        full.push(match y {
            Some(v) => *v,
            None => {
                let v = f.state.imputed.as_ref().map_or(f64::NAN, |m| m[i][k]);
                k += 1;
                v
            }
        });
    }
    let rows: Vec<usize> = match f.data.mode {
        Mode::Marginal => (0..pd.outcome.len()).filter(|&j| pd.outcome[j].is_some()).collect(),
        Mode::Joint => (0..pd.outcome.len()).collect(),
    };
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&j| full[j]));
    (rows, y)
}

struct Rows {
    d: DMatrix<f64>,
    s: DMatrix<f64>,
    z: DMatrix<f64>,
    y: DVector<f64>,
}

fn rows(f: &Frozen, i: usize) -> Rows {
    let (r, y) = active(f, i);
    let des = &f.data.patients[i].design;
    { let m = des.select_rows(&r); Rows { d: m.fixed, s: m.profile, z: m.random, y } }
}

fn canonical(prec: &DMatrix<f64>, lin: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let cov = spd_inverse(prec);
    (&cov * lin, cov)
}

fn profile_oracle(f: &Frozen, l: usize) -> (DVector<f64>, DMatrix<f64>) {
    let o = &f.state.outcome;
    let s2 = o.noise_var[l];
    let mut prec = spd_inverse(&f.prior.profile_cov);
    let mut lin = DVector::zeros(prec.nrows());
    for i in 0..f.data.patients.len() {
        if f.state.allocation[i] != l {
            continue;
        }
        let r = rows(f, i);
        prec += r.s.transpose() * &r.s / s2;
        lin += r.s.transpose() * (&r.y - &r.d * &o.fixed_effects - &r.z * o.random_effects.row(i).transpose()) / s2;
    }
    canonical(&prec, &lin)
}

/// Fixed effects with the random effects integrated out, using the full
/// marginal covariance of each patient.
fn fixed_oracle(f: &Frozen) -> (DVector<f64>, DMatrix<f64>) {
    let o = &f.state.outcome;
    let mut prec = spd_inverse(&f.prior.fixed_cov);
    let mut lin = DVector::zeros(prec.nrows());
    for i in 0..f.data.patients.len() {
        let c = f.state.allocation[i];
        let r = rows(f, i);
        let v = &r.z * &o.random_cov * r.z.transpose() + DMatrix::identity(r.y.len(), r.y.len()) * o.noise_var[c];
        let vi = spd_inverse(&v);
        prec += r.d.transpose() * &vi * &r.d;
        lin += r.d.transpose() * &vi * (&r.y - &r.s * o.profile_effects.row(c).transpose());
    }
    canonical(&prec, &lin)
}

fn random_oracle(f: &Frozen, i: usize) -> (DVector<f64>, DMatrix<f64>) {
    let o = &f.state.outcome;
    let c = f.state.allocation[i];
    let s2 = o.noise_var[c];
    let r = rows(f, i);
    let prec = spd_inverse(&o.random_cov) + r.z.transpose() * &r.z / s2;
    let lin = r.z.transpose() * (&r.y - &r.d * &o.fixed_effects - &r.s * o.profile_effects.row(c).transpose()) / s2;
    canonical(&prec, &lin)
}

/// Inverse-gamma shape and rate of each noise variance.
fn noise_oracle(f: &Frozen) -> Vec<(f64, f64)> {
    let o = &f.state.outcome;
    let l = f.data.dims.classes;
    let mut out = vec![(f.prior.noise_shape, f.prior.noise_rate); l];
    for i in 0..f.data.patients.len() {
        let c = f.state.allocation[i];
        let r = rows(f, i);
        let e = &r.y - &r.d * &o.fixed_effects - &r.s * o.profile_effects.row(c).transpose() - &r.z * o.random_effects.row(i).transpose();
        out[c].0 += r.y.len() as f64 / 2.0;
        out[c].1 += e.norm_squared() / 2.0;
    }
    out
}

fn pg_mean(c: f64) -> f64 {
    if c.abs() < 1e-8 {
        0.25
    } else {
        (c / 2.0).tanh() / (2.0 * c)
    }
}

/// Variance of PG(1, c).
fn pg_var(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        1.0 / 24.0 - c * c / 240.0
    } else {
        (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2))
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Offset and tilt of patient `i` for class `l` against the rest.
fn allocation_tilt(f: &Frozen, i: usize, l: usize) -> (f64, f64) {
    let x = &f.data.patients[i].allocation_covariates;
    let lin = &f.state.alloc.coef * x;
    let others: Vec<f64> = (0..lin.len()).filter(|&k| k != l).map(|k| lin[k]).collect();
    let off = log_sum_exp(&others);
    (off, lin[l] - off)
}

/// Exact conditional of one allocation row given the labels, integrated
/// on a grid (two coefficients).
fn allocation_quadrature(f: &Frozen, l: usize) -> (DVector<f64>, DMatrix<f64>) {
    let xs: Vec<DVector<f64>> = f.data.patients.iter().map(|p| p.allocation_covariates.clone()).collect();
    let offs: Vec<f64> = (0..xs.len()).map(|i| allocation_tilt(f, i, l).0).collect();
    let hits: Vec<f64> = f.state.allocation.iter().map(|&c| if c == l { 1.0 } else { 0.0 }).collect();
    let prior_prec = spd_inverse(&f.prior.allocation_cov);
    let prior_mean = f.prior.allocation_mean.row(l).transpose();
    let logpost = |eta: &DVector<f64>| -> f64 {
        let d = eta - &prior_mean;
        let mut v = -0.5 * (d.transpose() * &prior_prec * &d)[0];
        for i in 0..xs.len() {
            let u = xs[i].dot(eta) - offs[i];
            v += hits[i] * u - (1.0 + u.exp()).ln();
        }
        v
    };
    // Newton for the mode and curvature.
    let mut eta = DVector::zeros(2);
    let mut hess = prior_prec.clone();
    for _ in 0..50 {
        let mut g = -(&prior_prec * (&eta - &prior_mean));
        hess = prior_prec.clone();
        for i in 0..xs.len() {
            let u = xs[i].dot(&eta) - offs[i];
            let p = 1.0 / (1.0 + (-u).exp());
            g += &xs[i] * (hits[i] - p);
            hess += &xs[i] * xs[i].transpose() * (p * (1.0 - p));
        }
        let step = hess.clone().lu().solve(&g).expect("solve");
        eta += &step;
        if step.norm() < 1e-12 {
            break;
        }
    }
    let sd = spd_inverse(&hess).diagonal().map(f64::sqrt);
    let k = 401;
    let half = 9.0;
    let peak = logpost(&eta);
    let (mut w, mut m1, mut m2) = (0.0, DVector::zeros(2), DMatrix::zeros(2, 2));
    for a in 0..k {
        for b in 0..k {
            let p = DVector::from_vec(vec![
                eta[0] + sd[0] * half * (2.0 * a as f64 / (k - 1) as f64 - 1.0),
                eta[1] + sd[1] * half * (2.0 * b as f64 / (k - 1) as f64 - 1.0),
            ]);
            let d = (logpost(&p) - peak).exp();
            w += d;
            m1 += &p * d;
            m2 += &p * p.transpose() * d;
        }
    }
    let mean = m1 / w;
    let cov = m2 / w - &mean * mean.transpose();
    (mean, cov)
}

/// Batch-means check for a correlated chain of draws.
fn check_chain(checks: &mut Checks, label: &str, draws: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>) {
    let batches = 50;
    let size = draws.len() / batches;
    let k = mean.len();
    let stat = |f: &dyn Fn(&DVector<f64>) -> f64, target: f64, name: String, checks: &mut Checks| {
        let bm: Vec<f64> = (0..batches).map(|b| draws[b * size..(b + 1) * size].iter().map(f).sum::<f64>() / size as f64).collect();
        let est = crate::common::mean(&bm);
        let se = (crate::common::variance(&bm) / batches as f64).sqrt();
        checks.z(&name, est, target, se);
    };
    for a in 0..k {
        stat(&|d| d[a], mean[a], format!("{label} mean[{a}]"), checks);
    }
    for a in 0..k {
        for b in a..k {
            stat(&|d| (d[a] - mean[a]) * (d[b] - mean[b]), cov[(a, b)], format!("{label} cov[{a},{b}]"), checks);
        }
    }
}

fn presence_oracle_parts(f: &Frozen, i: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let p = f.data.patients[i].presence.as_ref().expect("joint");
    let kappa = p.present.map(|r| r - 0.5);
    let w = DVector::from_vec(f.state.pg_presence[i].clone());
    (p.fixed.clone(), p.profile.clone(), p.random.clone(), kappa, w)
}

fn outcome_blocks(f: &Frozen, checks: &mut Checks, tag: &str) {
    let (data, prior) = (&f.data, &f.prior);
    let st = &f.state;

    for l in 1..data.dims.classes {
        let (m, v) = profile_oracle(f, l);
        let draws = redraw(st, |s, r, t| update_profile_effects(s, data, prior, r, t), |s| s.outcome.profile_effects.row(l).transpose());
        check_moments(checks, &format!("{tag} profile effects class {l}"), &draws, &m, &v);
    }

    // Allocation: auxiliaries given the old row, the row given the auxiliaries,
    // and a long run of the block against the exact conditional.
    for l in 1..data.dims.classes {
        let n = data.patients.len();
        let draws = redraw(st, |s, r, t| update_allocation(s, data, prior, r, t), |s| (s.alloc.coef.row(l).transpose(), s.pg_alloc.column(l).into_owned()));
        for i in 0..n {
            let c = allocation_tilt(f, i, l).1;
            let w: Vec<f64> = draws.iter().map(|d| d.1[i]).collect();
            check_scalar(checks, &format!("{tag} allocation auxiliary {i}"), &w, pg_mean(c), pg_var(c));
        }
        let prior_prec = spd_inverse(&prior.allocation_cov);
        let prior_lin = &prior_prec * prior.allocation_mean.row(l).transpose();
        let standardized: Vec<DVector<f64>> = draws
            .iter()
            .map(|(eta, w)| {
                let mut prec = prior_prec.clone();
                let mut lin = prior_lin.clone();
                for i in 0..n {
                    let x = &data.patients[i].allocation_covariates;
                    let (off, _) = allocation_tilt(f, i, l);
                    let kappa = if st.allocation[i] == l { 0.5 } else { -0.5 };
                    prec += x * x.transpose() * w[i];
                    lin += x * (kappa + w[i] * off);
                }
                let chol = prec.clone().cholesky().expect("spd");
                let mean = chol.solve(&lin);
                chol.l().transpose() * (eta - mean)
            })
            .collect();
        let k = standardized[0].len();
        check_moments(checks, &format!("{tag} allocation row {l} given auxiliaries"), &standardized, &DVector::zeros(k), &DMatrix::identity(k, k));

        let (qm, qv) = allocation_quadrature(f, l);
        let stream = RngStream::new(77, 3);
        let mut s = st.clone();
        let mut chain = Vec::with_capacity(REDRAWS);
        for t in 0..(REDRAWS + 500) as u64 {
            update_allocation(&mut s, data, prior, &stream, t + 1).expect("allocation");
            if t >= 500 {
                chain.push(s.alloc.coef.row(l).transpose());
            }
        }
        check_chain(checks, &format!("{tag} allocation row {l} exact conditional"), &chain, &qm, &qv);
    }

    let (m, v) = fixed_oracle(f);
    let draws = redraw(st, |s, r, t| update_fixed_effects(s, data, prior, r, t), |s| s.outcome.fixed_effects.clone());
    check_moments(checks, &format!("{tag} fixed effects"), &draws, &m, &v);

    let draws = redraw(st, |s, r, t| update_random_effects(s, data, r, t), |s| s.outcome.random_effects.clone());
    for i in 0..data.patients.len() {
        let (m, v) = random_oracle(f, i);
        let di: Vec<DVector<f64>> = draws.iter().map(|d| d.row(i).transpose()).collect();
        check_moments(checks, &format!("{tag} random effects {i}"), &di, &m, &v);
    }

    let draws = redraw(st, |s, r, t| update_noise_variances(s, data, prior, r, t), |s| s.outcome.noise_var.clone());
    for (l, (a, b)) in noise_oracle(f).into_iter().enumerate() {
        let v: Vec<f64> = draws.iter().map(|d| d[l]).collect();
        check_scalar(checks, &format!("{tag} noise variance {l}"), &v, b / (a - 1.0), b * b / ((a - 1.0).powi(2) * (a - 2.0)));
    }

    let draws = redraw(st, |s, r, t| update_random_covariance(s, data, prior, r, t), |s| s.outcome.random_cov.clone());
    let b = &st.outcome.random_effects;
    check_inverse_wishart(checks, &format!("{tag} random-effect covariance"), &draws, data.patients.len() as f64 + prior.random_dof, &(b.transpose() * b + &prior.random_scale));
}

fn presence_blocks(f: &Frozen, checks: &mut Checks) {
    let (data, prior) = (&f.data, &f.prior);
    let st = &f.state;
    let pp = st.presence.as_ref().expect("joint state");
    let n = data.patients.len();

    let draws = redraw(st, |s, r, t| update_presence_auxiliaries(s, data, r, t), |s| s.pg_presence.clone());
    for i in 0..n {
        let (bf, bp, br, _, _) = presence_oracle_parts(f, i);
        let psi = &bf * &pp.fixed_effects + &bp * pp.profile_effects.row(st.allocation[i]).transpose() + &br * pp.random_effects.row(i).transpose();
        for j in 0..psi.len() {
            let w: Vec<f64> = draws.iter().map(|d| d[i][j]).collect();
            check_scalar(checks, &format!("joint presence auxiliary {i},{j}"), &w, pg_mean(psi[j]), pg_var(psi[j]));
        }
    }

    let gram = |x: &DMatrix<f64>, w: &DVector<f64>| x.transpose() * DMatrix::from_diagonal(w) * x;

    let mut prec = spd_inverse(prior.presence_fixed_cov.as_ref().expect("joint prior"));
    let mut lin = DVector::zeros(prec.nrows());
    for i in 0..n {
        let (bf, bp, br, kappa, w) = presence_oracle_parts(f, i);
        let off = &bp * pp.profile_effects.row(st.allocation[i]).transpose() + &br * pp.random_effects.row(i).transpose();
        prec += gram(&bf, &w);
        lin += bf.transpose() * (kappa - w.component_mul(&off));
    }
    let (m, v) = canonical(&prec, &lin);
    let draws = redraw(st, |s, r, t| update_presence_fixed(s, data, prior, r, t), |s| s.presence.as_ref().unwrap().fixed_effects.clone());
    check_moments(checks, "joint presence fixed effects", &draws, &m, &v);

    for l in 1..data.dims.classes {
        let mut prec = spd_inverse(prior.presence_profile_cov.as_ref().expect("joint prior"));
        let mut lin = DVector::zeros(prec.nrows());
        for i in (0..n).filter(|&i| st.allocation[i] == l) {
            let (bf, bp, br, kappa, w) = presence_oracle_parts(f, i);
            let off = &bf * &pp.fixed_effects + &br * pp.random_effects.row(i).transpose();
            prec += gram(&bp, &w);
            lin += bp.transpose() * (kappa - w.component_mul(&off));
        }
        let (m, v) = canonical(&prec, &lin);
        let draws = redraw(st, |s, r, t| update_presence_profile(s, data, prior, r, t), |s| s.presence.as_ref().unwrap().profile_effects.row(l).transpose());
        check_moments(checks, &format!("joint presence profile effects class {l}"), &draws, &m, &v);
    }

    let draws = redraw(st, |s, r, t| update_presence_random(s, data, r, t), |s| s.presence.as_ref().unwrap().random_effects.clone());
    let cov_inv = spd_inverse(&pp.random_cov);
    for i in 0..n {
        let (bf, bp, br, kappa, w) = presence_oracle_parts(f, i);
        let off = &bf * &pp.fixed_effects + &bp * pp.profile_effects.row(st.allocation[i]).transpose();
        let prec = &cov_inv + gram(&br, &w);
        let lin = br.transpose() * (kappa - w.component_mul(&off));
        let (m, v) = canonical(&prec, &lin);
        let di: Vec<DVector<f64>> = draws.iter().map(|d| d.row(i).transpose()).collect();
        check_moments(checks, &format!("joint presence random effects {i}"), &di, &m, &v);
    }

    let draws = redraw(st, |s, r, t| update_presence_covariance(s, data, prior, r, t), |s| s.presence.as_ref().unwrap().random_cov.clone());
    let e = &pp.random_effects;
    let scale = e.transpose() * e + prior.presence_random_scale.as_ref().expect("joint prior");
    check_inverse_wishart(checks, "joint presence covariance", &draws, n as f64 + prior.presence_random_dof, &scale);

    let draws = redraw(st, |s, r, t| update_imputations(s, data, r, t), |s| s.imputed.clone().expect("joint imputations"));
    let o = &st.outcome;
    for i in 0..n {
        let pd = &data.patients[i];
        let c = st.allocation[i];
        for (k, &j) in pd.missing_rows.iter().enumerate() {
            let mean = pd.design.fixed.row(j).dot(&o.fixed_effects.transpose())
                + pd.design.profile.row(j).dot(&o.profile_effects.row(c))
                + pd.design.random.row(j).dot(&o.random_effects.row(i));
            let v: Vec<f64> = draws.iter().map(|d| d[i][k]).collect();
            check_scalar(checks, &format!("joint imputation {i},{j}"), &v, mean, o.noise_var[c]);
        }
    }
}

pub fn run() -> Outcome {
    let mut checks = Checks::new(LIMIT);
    let marginal = frozen(Mode::Marginal);
    outcome_blocks(&marginal, &mut checks, "marginal");
    let joint = frozen(Mode::Joint);
    outcome_blocks(&joint, &mut checks, "joint");
    presence_blocks(&joint, &mut checks);
    Outcome::new(checks.passed(), format!("{} redraws per block; {}", REDRAWS, checks.summary()))
}
