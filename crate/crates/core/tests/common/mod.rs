//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn randn<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    (y - x * b).norm_squared() / (2.0 * n) + lambda * b.lp_norm(1)
}

/// Largest violation of the Lasso optimality conditions, computed from the
/// raw data rather than the solver's cached Gram quantities.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let grad = x.tr_mul(&(y - x * b)) / n;
    grad.iter()
        .zip(b.iter())
        .map(|(&g, &bj)| {
            if bj != 0.0 {
                (g - lambda * bj.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Exact Lasso by enumerating all `3^p` sign patterns: solve the reduced
/// normal equations on the active set, keep sign-consistent candidates that
/// satisfy the inactive-set conditions, return the lowest objective.
pub fn sign_pattern_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(p as u32) {
        let mut signs = vec![0.0; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        let mut beta = DVector::zeros(p);
        if !active.is_empty() {
            let xa = x.select_columns(active.iter());
            let sa = DVector::from_iterator(active.len(), active.iter().map(|&j| signs[j]));
            let rhs = xa.tr_mul(y) / nf - sa * lambda;
            let Some(sol) = (xa.tr_mul(&xa) / nf).lu().solve(&rhs) else { continue };
            for (k, &j) in active.iter().enumerate() {
                beta[j] = sol[k];
            }
            if active.iter().any(|&j| beta[j].signum() != signs[j]) {
                continue;
            }
        }
        let grad = x.tr_mul(&(y - x * &beta)) / nf;
        if (0..p).any(|j| signs[j] == 0.0 && grad[j].abs() > lambda + 1e-12) {
            continue;
        }
        let obj = lasso_objective(x, y, &beta, lambda);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, beta));
        }
    }
    best.expect("the optimum matches one sign pattern").1
}

/// `max_j |x_j' y| / n`, the smallest penalty with an all-zero solution.
pub fn lambda_max_oracle(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    (0..x.ncols()).map(|j| x.column(j).dot(y).abs() / n).fold(0.0, f64::max)
}
