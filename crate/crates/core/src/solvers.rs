//! Numerical kernels: cyclic coordinate-descent Lasso, hard rank truncation and
//! a truncated SVD.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FavarError, Result};

/// Default inner-solver tolerance on the largest coefficient change per sweep.
pub const DEFAULT_LASSO_TOL: f64 = 1e-7;
/// Default KKT tolerance checked before a Lasso solve is declared converged.
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
pub const DEFAULT_LASSO_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Record the objective after every sweep.
    pub record_trace: bool,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_LASSO_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
            max_iter: DEFAULT_LASSO_MAX_ITER,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta: DVector<f64>,
    /// `(1/2n)|y - X b|^2 + lambda |b|_1` at exit.
    pub objective: f64,
    /// Number of full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation at exit.
    pub kkt_residual: f64,
    /// Objective after each sweep (empty unless requested).
    pub trace: Vec<f64>,
}

/// Lasso on a fixed design, in covariance form.
///
/// Stores `X'X/n` once so that many responses sharing the design (the rows of
/// `Γ` or of `A`) are solved without touching the `n x p` data again.
#[derive(Debug, Clone)]
pub struct GramLasso {
    gram: DMatrix<f64>,
    n: usize,
}

impl GramLasso {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(FavarError::InvalidArgument("design has no rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FavarError::NonFinite("lasso design"));
        }
        let n = x.nrows();
        let gram = x.tr_mul(x) / n as f64;
        Ok(Self { gram, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Solves one response given `xty = X'y/n` and `yty = y'y/n`.
    ///
    /// `warm` seeds the coefficients; the result does not depend on it beyond
    /// the solver tolerance.
    pub fn solve(
        &self,
        xty: &[f64],
        yty: f64,
        lambda: f64,
        warm: Option<&[f64]>,
        settings: &LassoSettings,
    ) -> LassoSolution {
        let p = self.p();
        debug_assert_eq!(xty.len(), p);
        let g = self.gram.as_slice();
        let col = |j: usize| &g[j * p..(j + 1) * p];
        let mut beta = match warm {
            Some(w) => w.to_vec(),
            None => vec![0.0; p],
        };
        // grad[j] = (1/n) X_j'(y - X beta)
        let mut grad = xty.to_vec();
        refresh_gradient(g, p, xty, &beta, &mut grad);

        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let mut kkt = f64::INFINITY;
        let all: Vec<usize> = (0..p).collect();
        let mut active = Vec::with_capacity(p);
        let sweep = |coords: &[usize], beta: &mut [f64], grad: &mut [f64]| {
            let mut max_change = 0.0f64;
            for &j in coords {
                let gjj = g[j * p + j];
                let old = beta[j];
                let new = if gjj > 0.0 {
                    soft_threshold(grad[j] + gjj * old, lambda) / gjj
                } else {
                    0.0
                };
                if new != old {
                    let delta = new - old;
                    beta[j] = new;
                    for (gi, &gij) in grad.iter_mut().zip(col(j)) {
                        *gi -= gij * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            max_change
        };
        // full sweeps alternate with sweeps restricted to the current support
        'outer: while iterations < settings.max_iter {
            iterations += 1;
            let change = sweep(&all, &mut beta, &mut grad);
            if settings.record_trace {
                trace.push(covariance_objective(xty, yty, &beta, &grad, lambda));
            }
            if change < settings.tol {
                refresh_gradient(g, p, xty, &beta, &mut grad);
                kkt = kkt_violation(&beta, &grad, lambda);
                if kkt <= settings.kkt_tol {
                    converged = true;
                    break;
                }
                continue;
            }
            active.clear();
            active.extend((0..p).filter(|&j| beta[j] != 0.0));
            while iterations < settings.max_iter {
                iterations += 1;
                let change = sweep(&active, &mut beta, &mut grad);
                if settings.record_trace {
                    trace.push(covariance_objective(xty, yty, &beta, &grad, lambda));
                }
                if change < settings.tol {
                    continue 'outer;
                }
            }
        }
        if !converged {
            refresh_gradient(g, p, xty, &beta, &mut grad);
            kkt = kkt_violation(&beta, &grad, lambda);
        }
        let objective = covariance_objective(xty, yty, &beta, &grad, lambda);
        LassoSolution {
            beta: DVector::from_vec(beta),
            objective,
            iterations,
            converged,
            kkt_residual: kkt,
            trace,
        }
    }
}

// `g` is the column-major `p x p` Gram matrix.
fn refresh_gradient(g: &[f64], p: usize, xty: &[f64], beta: &[f64], grad: &mut [f64]) {
    grad.copy_from_slice(xty);
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (gj, &gjk) in grad.iter_mut().zip(&g[k * p..(k + 1) * p]) {
                *gj -= gjk * b;
            }
        }
    }
}

// 0.5 y'y/n - b'X'y/n + 0.5 b'Gb + lambda|b|_1, using Gb = X'y/n - grad.
fn covariance_objective(xty: &[f64], yty: f64, beta: &[f64], grad: &[f64], lambda: f64) -> f64 {
    let mut cb = 0.0;
    let mut gb = 0.0;
    let mut l1 = 0.0;
    for ((&c, &b), &r) in xty.iter().zip(beta).zip(grad) {
        cb += c * b;
        gb += r * b;
        l1 += b.abs();
    }
    0.5 * yty - 0.5 * cb - 0.5 * gb + lambda * l1
}

fn kkt_violation(beta: &[f64], grad: &[f64], lambda: f64) -> f64 {
    beta.iter()
        .zip(grad)
        .map(|(&b, &r)| {
            if b != 0.0 {
                (r - lambda * b.signum()).abs()
            } else {
                (r.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[inline]
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)|y - X b|^2 + lambda |b|_1` by cyclic coordinate descent.
///
/// Non-convergence within `max_iter` sweeps is reported through the
/// `converged` flag.
pub fn lasso_row(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoSolution> {
    lasso_row_with(
        x,
        y,
        lambda,
        &LassoSettings {
            tol,
            max_iter,
            ..LassoSettings::default()
        },
    )
}

pub fn lasso_row_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    settings: &LassoSettings,
) -> Result<LassoSolution> {
    if y.len() != x.nrows() {
        return Err(crate::error::dim_mismatch("lasso response", x.nrows(), y.len()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FavarError::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FavarError::NonFinite("lasso response"));
    }
    let solver = GramLasso::new(x)?;
    let n = x.nrows() as f64;
    let xty: Vec<f64> = (x.tr_mul(y) / n).iter().copied().collect();
    let yty = y.norm_squared() / n;
    Ok(solver.solve(&xty, yty, lambda, None, settings))
}

/// Smallest `lambda` at which the Lasso solution is identically zero.
pub fn lambda_max(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    (x.tr_mul(y) / n).amax()
}

/// Leading singular triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        us * self.v.transpose()
    }
}

/// Top-`r` singular triplets, singular values in non-increasing order.
///
/// Built from the leading eigenvectors of the smaller Gram matrix, with each
/// singular value recomputed as `|M v|` and the opposite factor normalised
/// from it. nalgebra's bidiagonal SVD returns inconsistent singular vectors
/// on some exactly rank-deficient inputs, which is the common case here.
pub fn truncated_svd(m: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, q) = m.shape();
    let k = n.min(q);
    if r == 0 || r > k {
        return Err(FavarError::InvalidArgument(format!(
            "rank {r} outside 1..={k}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FavarError::NonFinite("svd input"));
    }
    let (u, s, v) = if q <= n {
        let v = leading_eigenvectors(m.tr_mul(m), r);
        let (u, s) = normalised_image(m * &v);
        (u, s, v)
    } else {
        let u = leading_eigenvectors(m * m.transpose(), r);
        let (v, s) = normalised_image(m.tr_mul(&u));
        (u, s, v)
    };
    let order = descending(&s);
    Ok(TruncatedSvd {
        u: u.select_columns(order.iter()),
        singular_values: DVector::from_iterator(r, order.iter().map(|&j| s[j])),
        v: v.select_columns(order.iter()),
    })
}

/// Splits `B = W diag(s)` into unit columns and their norms. Columns of `B`
/// are mutually orthogonal up to rounding; a column that is numerically zero
/// is replaced by a unit vector orthogonal to the others so `W` stays
/// orthonormal.
fn normalised_image(mut b: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let r = b.ncols();
    let s = DVector::from_fn(r, |j, _| b.column(j).norm());
    let floor = s.max() * f64::EPSILON * b.nrows() as f64;
    for j in 0..r {
        if s[j] > floor {
            b.column_mut(j).scale_mut(1.0 / s[j]);
            continue;
        }
        let done = b.columns(0, j).into_owned();
        let fill = (0..b.nrows())
            .map(|e| {
                let mut c = DVector::zeros(b.nrows());
                c[e] = 1.0;
                &c - &done * done.tr_mul(&c)
            })
            .max_by(|a, c| a.norm().total_cmp(&c.norm()))
            .expect("at least one row");
        b.set_column(j, &fill.normalize());
    }
    (b, s)
}

/// Best rank-`r` approximation in Frobenius norm, keeping the top `r`
/// singular values exactly and zeroing the rest.
pub fn truncate_rank(m: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (n, q) = m.shape();
    let k = n.min(q);
    if r > k {
        return Err(FavarError::InvalidArgument(format!(
            "rank {r} exceeds min dimension {k}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FavarError::NonFinite("rank truncation input"));
    }
    if r == 0 {
        return Ok(DMatrix::zeros(n, q));
    }
    if r == k {
        return Ok(m.clone());
    }
    // Project onto the leading eigenvectors of the smaller Gram matrix.
    if q <= n {
        let basis = leading_eigenvectors(m.tr_mul(m), r);
        let coords = m * &basis;
        Ok(coords * basis.transpose())
    } else {
        let basis = leading_eigenvectors(m * m.transpose(), r);
        let coords = basis.tr_mul(m);
        Ok(basis * coords)
    }
}

fn leading_eigenvectors(gram: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(eig.eigenvectors.nrows(), r, |i, j| {
        eig.eigenvectors[(i, order[j])]
    })
}

/// Extra block width carried by the subspace iteration in [`sym_top_eigen`].
const SUBSPACE_OVERSAMPLE: usize = 10;
const SUBSPACE_MAX_ITER: usize = 60;
/// Ritz residual tolerance relative to the largest eigenvalue.
const SUBSPACE_TOL: f64 = 1e-9;
/// Relative change in the captured energy `Σ θ_i` treated as converged.
const SUBSPACE_ENERGY_TOL: f64 = 1e-11;

/// Leading eigenpairs of a symmetric positive semidefinite matrix, plus the
/// wider Ritz block that seeds the next call.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTopEigen {
    /// `m x r`, orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// Non-increasing.
    pub values: DVector<f64>,
    pub block: DMatrix<f64>,
}

/// Top-`r` eigenpairs of a symmetric PSD matrix `s`.
///
/// With a `warm` block from a previous call on a nearby matrix, runs subspace
/// iteration with Rayleigh-Ritz until every wanted Ritz residual is below
/// `1e-9 * λ_1`, falling back to a dense decomposition if that stalls.
pub fn sym_top_eigen(s: &DMatrix<f64>, r: usize, warm: Option<&DMatrix<f64>>) -> Result<SymTopEigen> {
    let (eig, converged) = sym_top_eigen_steps(s, r, warm, SUBSPACE_MAX_ITER)?;
    if converged {
        Ok(eig)
    } else {
        Ok(dense_top_eigen(s, r, eig.block.ncols()))
    }
}

/// At most `max_steps` warm subspace-iteration steps; the flag reports whether
/// the Ritz residuals met the tolerance. Without a usable warm block the dense
/// decomposition is returned.
fn sym_top_eigen_steps(
    s: &DMatrix<f64>,
    r: usize,
    warm: Option<&DMatrix<f64>>,
    max_steps: usize,
) -> Result<(SymTopEigen, bool)> {
    let m = s.nrows();
    if !s.is_square() {
        return Err(FavarError::InvalidArgument("eigen input must be square".into()));
    }
    if r == 0 || r > m {
        return Err(FavarError::InvalidArgument(format!("rank {r} outside 1..={m}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(FavarError::NonFinite("eigen input"));
    }
    let k = (r + SUBSPACE_OVERSAMPLE).min(m);
    let warm = warm.filter(|w| w.nrows() == m && w.ncols() == k && 2 * k < m);
    let Some(start) = warm else {
        return Ok((dense_top_eigen(s, r, k), true));
    };
    let mut q = start.clone().qr().q();
    let mut best: Option<(SymTopEigen, f64)> = None;
    for _ in 0..max_steps.max(1) {
        let z = s * &q;
        let mut h = q.tr_mul(&z);
        h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let order = descending(&eig.eigenvalues);
        let w = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let u = &q * &w;
        let su = z * &w;
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        let energy: f64 = theta[..r].iter().sum();
        // captured energy is second order in the subspace error, so it settles
        // long before the vectors do when wanted and unwanted values nearly tie
        let settled = best
            .as_ref()
            .is_some_and(|(_, e)| (energy - e).abs() <= SUBSPACE_ENERGY_TOL * energy.abs());
        let done = settled
            || (0..r).all(|i| (su.column(i) - u.column(i) * theta[i]).norm() <= SUBSPACE_TOL * scale);
        if best.as_ref().is_none_or(|(_, e)| energy >= *e) {
            best = Some((
                SymTopEigen {
                    vectors: u.columns(0, r).into_owned(),
                    values: DVector::from_fn(r, |i, _| theta[i].max(0.0)),
                    block: u,
                },
                energy,
            ));
        }
        if done {
            return Ok((best.expect("set above").0, true));
        }
        q = su.qr().q();
    }
    Ok((best.expect("at least one step").0, false))
}

fn dense_top_eigen(s: &DMatrix<f64>, r: usize, k: usize) -> SymTopEigen {
    let eig = SymmetricEigen::new(s.clone());
    let order = descending(&eig.eigenvalues);
    let block = DMatrix::from_fn(s.nrows(), k, |i, j| eig.eigenvectors[(i, order[j])]);
    SymTopEigen {
        vectors: block.columns(0, r).into_owned(),
        values: DVector::from_fn(r, |i, _| eig.eigenvalues[order[i]].max(0.0)),
        block,
    }
}

fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Numerical rank at a relative singular-value cutoff.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
        let n = x.nrows() as f64;
        (y - x * b).norm_squared() / (2.0 * n) + lambda * b.lp_norm(1)
    }

    /// Exact Lasso by enumerating every sign pattern: solve the reduced normal
    /// equations on the active set, keep candidates satisfying the full KKT
    /// system, and return the one with the smallest objective.
    fn sign_pattern_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
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
                let xa = DMatrix::from_fn(n, active.len(), |i, k| x[(i, active[k])]);
                let lhs = xa.tr_mul(&xa) / nf;
                let sa = DVector::from_iterator(active.len(), active.iter().map(|&j| signs[j]));
                let rhs = xa.tr_mul(y) / nf - sa * lambda;
                let Some(sol) = lhs.lu().solve(&rhs) else { continue };
                for (k, &j) in active.iter().enumerate() {
                    beta[j] = sol[k];
                }
                if active.iter().any(|&j| beta[j].signum() != signs[j]) {
                    continue;
                }
            }
            let grad = x.tr_mul(&(y - x * &beta)) / nf;
            let feasible = (0..p)
                .filter(|j| signs[*j] == 0.0)
                .all(|j| grad[j].abs() <= lambda + 1e-12);
            if !feasible {
                continue;
            }
            let obj = objective(x, y, &beta, lambda);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, beta));
            }
        }
        best.expect("the Lasso optimum satisfies one sign pattern").1
    }

    #[test]
    fn unpenalized_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(&mut rng, 30, 4);
        let y = DVector::from_fn(30, |_, _| rng.sample(StandardNormal));
        let sol = lasso_row(&x, &y, 0.0, 1e-12, 100_000).unwrap();
        let ls = (x.tr_mul(&x)).lu().solve(&x.tr_mul(&y)).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.beta, ls, epsilon = 1e-8);
    }

    #[test]
    fn kill_zone_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(&mut rng, 20, 5);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let lmax = (x.tr_mul(&y) / 20.0).amax();
        let sol = lasso_row(&x, &y, lmax, 1e-7, 1000).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        let just_below = lasso_row(&x, &y, 0.9 * lmax, 1e-7, 1000).unwrap();
        assert!(just_below.beta.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn micro_instances_match_sign_pattern_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = randn(&mut rng, 4, 2);
            let y = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
            let lmax = (x.tr_mul(&y) / 4.0).amax();
            let lambda = rng.gen_range(0.0..1.2) * lmax;
            let sol = lasso_row(&x, &y, lambda, 1e-12, 100_000).unwrap();
            let oracle = sign_pattern_oracle(&x, &y, lambda);
            assert!(sol.converged);
            assert_abs_diff_eq!(sol.beta, oracle, epsilon = 1e-6);
        }
    }

    #[test]
    fn objective_is_non_increasing_per_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randn(&mut rng, 40, 15);
        let y = DVector::from_fn(40, |_, _| rng.sample(StandardNormal));
        let settings = LassoSettings {
            record_trace: true,
            tol: 1e-10,
            ..LassoSettings::default()
        };
        let sol = lasso_row_with(&x, &y, 0.05, &settings).unwrap();
        assert!(sol.trace.len() > 2);
        for w in sol.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs().max(1.0), "{w:?}");
        }
        assert_abs_diff_eq!(sol.objective, objective(&x, &y, &sol.beta, 0.05), epsilon = 1e-10);
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(&mut rng, 50, 20);
        let y = DVector::from_fn(50, |_, _| rng.sample(StandardNormal));
        let solver = GramLasso::new(&x).unwrap();
        let xty: Vec<f64> = (x.tr_mul(&y) / 50.0).iter().copied().collect();
        let yty = y.norm_squared() / 50.0;
        let s = LassoSettings::default();
        let cold = solver.solve(&xty, yty, 0.05, None, &s);
        let prev = solver.solve(&xty, yty, 0.2, None, &s);
        let warm = solver.solve(&xty, yty, 0.05, Some(prev.beta.as_slice()), &s);
        assert_abs_diff_eq!(cold.beta, warm.beta, epsilon = 1e-5);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = randn(&mut rng, 30, 10);
        let y = DVector::from_fn(30, |_, _| rng.sample(StandardNormal));
        let sol = lasso_row(&x, &y, 1e-4, 1e-14, 1).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn rejects_bad_lambda() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::zeros(3);
        assert!(lasso_row(&x, &y, -1.0, 1e-7, 10).is_err());
        assert!(lasso_row(&x, &DVector::zeros(4), 0.1, 1e-7, 10).is_err());
    }

    #[test]
    fn truncate_rank_cases() {
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let t = truncate_rank(&diag, 2).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert_abs_diff_eq!(t, expected, epsilon = 1e-12);
        assert_eq!(truncate_rank(&diag, 0).unwrap(), DMatrix::zeros(3, 3));
        assert!(truncate_rank(&diag, 4).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let low = randn(&mut rng, 12, 2) * randn(&mut rng, 2, 7);
        assert!((truncate_rank(&low, 2).unwrap() - &low).norm() < 1e-10);
        assert!((truncate_rank(&low, 3).unwrap() - &low).norm() < 1e-10);
        let wide = low.transpose();
        assert!((truncate_rank(&wide, 2).unwrap() - &wide).norm() < 1e-10);
    }

    #[test]
    fn truncation_error_is_the_discarded_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(n, q, r) in &[(15, 8, 3), (8, 15, 3), (20, 20, 5)] {
            let m = randn(&mut rng, n, q);
            let t = truncate_rank(&m, r).unwrap();
            let sv = truncated_svd(&m, n.min(q)).unwrap().singular_values;
            let tail: f64 = sv.iter().skip(r).map(|s| s * s).sum();
            assert_abs_diff_eq!((&m - &t).norm(), tail.sqrt(), epsilon = 1e-10);
            assert!(numerical_rank(&t, 1e-8) <= r);
            // idempotent
            assert_abs_diff_eq!(truncate_rank(&t, r).unwrap(), t, epsilon = 1e-10);
            // the SVD route reconstructs the same matrix
            let via_svd = truncated_svd(&m, r).unwrap().reconstruct();
            assert_abs_diff_eq!(via_svd, t, epsilon = 1e-10);
        }
    }

    #[test]
    fn eckart_young_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = randn(&mut rng, 6, 5);
        let best = (&m - truncate_rank(&m, 2).unwrap()).norm();
        for _ in 0..100 {
            let candidate = randn(&mut rng, 6, 2) * randn(&mut rng, 2, 5);
            assert!((&m - candidate).norm() >= best);
        }
    }

    #[test]
    fn truncated_svd_on_exactly_low_rank_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r = rng.gen_range(1..6);
            let n = rng.gen_range(r + 2..60);
            let q = rng.gen_range(r + 1..40);
            let m = randn(&mut rng, n, r) * randn(&mut rng, q, r).transpose();
            for k in [r, (r + 2).min(n.min(q))] {
                let s = truncated_svd(&m, k).unwrap();
                assert!((s.reconstruct() - &m).norm() <= 1e-10 * m.norm());
                assert_abs_diff_eq!(s.u.tr_mul(&s.u), DMatrix::identity(k, k), epsilon = 1e-8);
                assert_abs_diff_eq!(s.v.tr_mul(&s.v), DMatrix::identity(k, k), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn truncated_svd_contract() {
        let id = DMatrix::<f64>::identity(4, 4);
        let s = truncated_svd(&id, 4).unwrap();
        assert_abs_diff_eq!(s.singular_values, DVector::from_element(4, 1.0), epsilon = 1e-12);

        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let s = truncated_svd(&(&u * v.transpose()), 1).unwrap();
        assert_abs_diff_eq!(s.singular_values[0], 15.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = randn(&mut rng, 5, 3);
        let s = truncated_svd(&m, 3).unwrap();
        assert_abs_diff_eq!(s.u.tr_mul(&s.u), DMatrix::identity(3, 3), epsilon = 1e-10);
        assert_abs_diff_eq!(s.v.tr_mul(&s.v), DMatrix::identity(3, 3), epsilon = 1e-10);
        assert!((&m - s.reconstruct()).norm() <= 1e-10);
        assert!(s.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 4).is_err());
    }

    #[test]
    fn warm_subspace_eigen_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = DMatrix::<f64>::from_fn(80, 40, |_, _| rng.sample(StandardNormal));
        let s = a.tr_mul(&a);
        let cold = sym_top_eigen(&s, 4, None).unwrap();
        let noise = DMatrix::<f64>::from_fn(40, 40, |_, _| 1e-3 * rng.sample::<f64, _>(StandardNormal));
        let s2 = &s + (&noise + noise.transpose());
        let warm = sym_top_eigen(&s2, 4, Some(&cold.block)).unwrap();
        let dense = sym_top_eigen(&s2, 4, None).unwrap();
        assert_abs_diff_eq!(warm.values, dense.values, epsilon = 1e-9 * dense.values[0]);
        // projectors agree
        let pw = &warm.vectors * warm.vectors.transpose();
        let pd = &dense.vectors * dense.vectors.transpose();
        assert!((pw - pd).amax() < 1e-6);
        assert_abs_diff_eq!(warm.vectors.tr_mul(&warm.vectors), DMatrix::identity(4, 4), epsilon = 1e-10);
    }
}
