//! Rubin's rules on a case small enough to work by hand.

use profimpute::analysis::pool_scalar;

use crate::common::Outcome;

const TOL: f64 = 1e-12;

pub fn run() -> Outcome {
    let p = match pool_scalar("x", &[0.0, 2.0], &[1.0, 1.0]) {
        Ok(p) => p,
        Err(e) => return Outcome::fail(format!("pooling failed: {e}")),
    };
    // Q = 1, U = 1, B = 2, T = U + (1 + 1/2) B = 4,
    // df = (m - 1)(1 + U / ((1 + 1/m) B))^2 = (1 + 1/3)^2 = 16/9.
    let want = [("estimate", p.estimate, 1.0), ("within", p.within, 1.0), ("between", p.between, 2.0), ("total", p.total, 4.0), ("df", p.df, 16.0 / 9.0)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, target) in want {
        let ok = (got - target).abs() <= TOL;
        pass &= ok;
        parts.push(format!("{name} {got} (want {target})"));
    }
    let swapped = pool_scalar("x", &[2.0, 0.0], &[1.0, 1.0]).expect("pooling");
    let invariant = swapped == p;
    pass &= invariant;
    let short = pool_scalar("x", &[1.0], &[1.0]).is_err();
    pass &= short;
    Outcome::new(pass, format!("{}; permutation invariant: {invariant}; single dataset rejected: {short}; tolerance {TOL:e}", parts.join(", ")))
}
