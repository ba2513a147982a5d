//! Two-stage estimation.
//!
//! Stage I alternates between a rank-`r` truncation of `Y - X Γ'` (the factor
//! hyperplane `Θ`) and row-wise Lasso updates of `Γ`. Factors and loadings
//! are then extracted from `Θ̂` under the normalization that the upper
//! `p1 x p1` block of the loading is the identity. Stage II fits a sparse
//! VAR(d) to `(F̂, X)` one response coordinate at a time.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{dim_mismatch, FavarError, Result};
use crate::model::{ensure_centered, fmt_shape};
use crate::solvers::{
    numerical_rank, sym_top_eigen, truncate_rank, truncated_svd, GramLasso, LassoSettings,
};

pub const DEFAULT_STAGE1_TOL: f64 = 1e-6;
pub const DEFAULT_STAGE1_MAX_ITER: usize = 5000;
/// Largest admissible condition number of the leading loading block.
pub const MAX_IDENTIFICATION_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub lambda_gamma: f64,
    pub rank: usize,
    /// Entrywise bound on `Θ`; off unless set.
    pub box_bound: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting hyperplane; zero when absent.
    pub theta_init: Option<DMatrix<f64>>,
    /// Warm start for the inner Lasso solves of the first `Γ` update.
    pub gamma_init: Option<DMatrix<f64>>,
    /// Extrapolate `Γ` between alternations (same stopping rule and fixed
    /// points, far fewer iterations when progress is slow).
    pub accelerate: bool,
    pub lasso: LassoSettings,
}

impl Stage1Config {
    pub fn new(lambda_gamma: f64, rank: usize) -> Self {
        Self {
            lambda_gamma,
            rank,
            box_bound: None,
            tol: DEFAULT_STAGE1_TOL,
            max_iter: DEFAULT_STAGE1_MAX_ITER,
            theta_init: None,
            gamma_init: None,
            accelerate: false,
            lasso: LassoSettings::default(),
        }
    }

    fn validate(&self, n: usize, q: usize) -> Result<()> {
        if self.rank == 0 || self.rank > n.min(q) {
            return Err(FavarError::InvalidArgument(format!(
                "rank {} outside 1..={}",
                self.rank,
                n.min(q)
            )));
        }
        if !(self.lambda_gamma >= 0.0 && self.lambda_gamma.is_finite()) {
            return Err(FavarError::InvalidArgument(format!(
                "lambda_gamma must be finite and >= 0, got {}",
                self.lambda_gamma
            )));
        }
        if let Some(b) = self.box_bound {
            if !(b > 0.0) {
                return Err(FavarError::InvalidArgument(format!(
                    "box bound must be > 0, got {b}"
                )));
            }
        }
        if let Some(t) = &self.theta_init {
            if t.shape() != (n, q) {
                return Err(dim_mismatch("theta_init", format!("{n}x{q}"), fmt_shape(t)));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(FavarError::NonFinite("theta_init"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Fit {
    pub theta_hat: DMatrix<f64>,
    /// `q x p2`
    pub gamma_hat: DMatrix<f64>,
    /// `f(Θ, Γ)` after each completed alternation, preceded by the value at
    /// the initializer when that initializer is feasible.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_gamma: f64,
    pub rank: usize,
    /// Ritz block of the last truncation, reused by warm starts.
    pub(crate) ritz_block: Option<DMatrix<f64>>,
}

impl Stage1Fit {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// Residual `Y - Θ̂ - X Γ̂'`.
    pub fn residual(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        y - &self.theta_hat - x * self.gamma_hat.transpose()
    }

    pub fn gamma_nonzeros(&self) -> usize {
        self.gamma_hat.iter().filter(|v| **v != 0.0).count()
    }
}

/// Centered calibration data with its second moments precomputed, shared by
/// every lattice point of a tuning search.
#[derive(Debug, Clone)]
pub struct CalibrationData {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    lasso: GramLasso,
    /// `X'Y/n`
    cxy: DMatrix<f64>,
    /// `Y'X/n`
    cyx: DMatrix<f64>,
    /// `Y'Y/n`
    syy: DMatrix<f64>,
}

impl CalibrationData {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(dim_mismatch("calibration rows", x.nrows(), y.nrows()));
        }
        if x.nrows() < 2 {
            return Err(FavarError::InvalidArgument("need at least 2 samples".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(FavarError::NonFinite("calibration data"));
        }
        ensure_centered(x)?;
        ensure_centered(y)?;
        let n = x.nrows() as f64;
        let xt = x.transpose();
        let yt = y.transpose();
        let cxy = &xt * y / n;
        let syy = &yt * y / n;
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            lasso: GramLasso::new(x)?,
            cyx: cxy.transpose(),
            cxy,
            syy,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn p2(&self) -> usize {
        self.x.ncols()
    }

    /// `max |X'Y/n|`, the smallest `λ_Γ` that zeroes `Γ` when `Θ = 0`.
    pub fn lambda_max(&self) -> f64 {
        self.cxy.amax()
    }

    /// `f(Θ, Γ)` evaluated on the data directly.
    pub fn objective(&self, theta: &DMatrix<f64>, gamma: &DMatrix<f64>, lambda: f64) -> f64 {
        let n = self.n() as f64;
        let resid = &self.y - theta - &self.x * gamma.transpose();
        resid.norm_squared() / (2.0 * n) + lambda * gamma.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Solves every row of `Γ` given the columns of `X'(Y - Θ)/n` and the
    /// matching `|y_j - θ_j|^2/n`; returns the new `Γ` and `f`.
    fn solve_rows(
        &self,
        c: &DMatrix<f64>,
        yty: &[f64],
        warm: &DMatrix<f64>,
        lambda: f64,
        settings: &LassoSettings,
    ) -> (DMatrix<f64>, f64) {
        let q = self.q();
        let rows: Vec<(DVector<f64>, f64)> = (0..q)
            .into_par_iter()
            .map(|j| {
                let start: Vec<f64> = warm.row(j).iter().copied().collect();
                let sol = self
                    .lasso
                    .solve(c.column(j).as_slice(), yty[j], lambda, Some(&start), settings);
                (sol.beta, sol.objective)
            })
            .collect();
        let mut gamma = DMatrix::zeros(q, self.p2());
        let mut f = 0.0;
        for (j, (beta, obj)) in rows.iter().enumerate() {
            gamma.row_mut(j).copy_from(&beta.transpose());
            f += obj;
        }
        (gamma, f)
    }

    /// `Γ` update against an explicit hyperplane.
    fn update_gamma_dense(
        &self,
        theta: &DMatrix<f64>,
        warm: &DMatrix<f64>,
        lambda: f64,
        settings: &LassoSettings,
    ) -> (DMatrix<f64>, f64) {
        let n = self.n() as f64;
        let target = &self.y - theta;
        let c = self.x.transpose() * &target / n;
        let yty: Vec<f64> = target.column_iter().map(|col| col.norm_squared() / n).collect();
        self.solve_rows(&c, &yty, warm, lambda, settings)
    }

    /// Second moments of `M = Y - X Γ'` built from the stored moments and the
    /// sparsity of `Γ`: returns `(M'M/n, X'M/n, Y'M/n)`.
    fn residual_moments(&self, gamma: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (q, p2) = gamma.shape();
        let g = self.lasso.gram();
        let support: Vec<Vec<(usize, f64)>> = (0..q)
            .map(|j| {
                (0..p2)
                    .filter_map(|k| {
                        let v = gamma[(j, k)];
                        (v != 0.0).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        // ht = G Γ' (p2 x q), bt = (Γ X'Y/n)' = Y'X Γ'/n (q x q)
        let mut ht = DMatrix::zeros(p2, q);
        let mut bt = DMatrix::zeros(q, q);
        for (j, nz) in support.iter().enumerate() {
            let mut hcol = ht.column_mut(j);
            for &(k, v) in nz {
                hcol.axpy(v, &g.column(k), 1.0);
            }
            let mut bcol = bt.column_mut(j);
            for &(k, v) in nz {
                bcol.axpy(v, &self.cyx.column(k), 1.0);
            }
        }
        // Γ G Γ' column j = Σ_k Γ_jk (Γ G)_{·k} = Σ_k Γ_jk ht_{k·}'
        let h = ht.transpose();
        let mut hg = DMatrix::zeros(q, q);
        for (j, nz) in support.iter().enumerate() {
            let mut col = hg.column_mut(j);
            for &(k, v) in nz {
                col.axpy(v, &h.column(k), 1.0);
            }
        }
        let s = &self.syy - &bt - bt.transpose() + hg;
        let s = (&s + s.transpose()) * 0.5;
        let xm = &self.cxy - ht;
        let ym = &self.syy - bt;
        (s, xm, ym)
    }
}

/// Alternating minimization of
/// `(1/2n)|Y - Θ - X Γ'|_F^2 + λ_Γ |Γ|_1` subject to `rank(Θ) <= r`
/// (and optionally `|Θ|_inf <= box_bound`).
pub fn stage1_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &Stage1Config) -> Result<Stage1Fit> {
    let data = CalibrationData::new(x, y)?;
    stage1_fit_prepared(&data, cfg)
}

pub fn stage1_fit_prepared(data: &CalibrationData, cfg: &Stage1Config) -> Result<Stage1Fit> {
    stage1_fit_warm(data, cfg, None)
}

/// Stage I started from a previous fit (typically the neighbouring point of a
/// `λ_Γ` path at the same rank), overriding `theta_init` and `gamma_init`.
pub fn stage1_fit_warm(
    data: &CalibrationData,
    cfg: &Stage1Config,
    warm: Option<&Stage1Fit>,
) -> Result<Stage1Fit> {
    cfg.validate(data.n(), data.q())?;
    let (theta0, gamma0, block) = match warm {
        Some(w) => {
            if w.theta_hat.shape() != (data.n(), data.q()) || w.gamma_hat.shape() != (data.q(), data.p2()) {
                return Err(dim_mismatch(
                    "warm start",
                    format!("{}x{}", data.n(), data.q()),
                    fmt_shape(&w.theta_hat),
                ));
            }
            let block = if w.rank == cfg.rank { w.ritz_block.clone() } else { None };
            (Some(w.theta_hat.clone()), Some(w.gamma_hat.clone()), block)
        }
        None => (cfg.theta_init.clone(), cfg.gamma_init.clone(), None),
    };
    let gamma0 = match gamma0 {
        Some(g) if g.shape() == (data.q(), data.p2()) => g,
        Some(g) => {
            return Err(dim_mismatch(
                "gamma_init",
                format!("{}x{}", data.q(), data.p2()),
                fmt_shape(&g),
            ))
        }
        None => DMatrix::zeros(data.q(), data.p2()),
    };
    if cfg.box_bound.is_some() {
        stage1_dense(data, cfg, theta0, gamma0)
    } else {
        stage1_moments(data, cfg, theta0, gamma0, block)
    }
}

fn init_feasible(theta: &DMatrix<f64>, cfg: &Stage1Config) -> bool {
    cfg.box_bound.is_none_or(|b| theta.amax() <= b) && numerical_rank(theta, 1e-8) <= cfg.rank
}

/// Reference implementation working on explicit `n x q` matrices; required
/// for the box constraint.
pub(crate) fn stage1_dense(
    data: &CalibrationData,
    cfg: &Stage1Config,
    theta0: Option<DMatrix<f64>>,
    gamma0: DMatrix<f64>,
) -> Result<Stage1Fit> {
    let (n, q) = (data.n(), data.q());
    let lambda = cfg.lambda_gamma;
    let (mut theta, mut theta_feasible) = match theta0 {
        Some(t) => {
            let ok = init_feasible(&t, cfg);
            (t, ok)
        }
        None => (DMatrix::zeros(n, q), true),
    };
    let (mut gamma, f0) = data.update_gamma_dense(&theta, &gamma0, lambda, &cfg.lasso);
    let mut trace = Vec::new();
    if theta_feasible {
        trace.push(f0);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        // (1.1)
        let xg = data.x() * gamma.transpose();
        let mut candidate = truncate_rank(&(data.y() - &xg), cfg.rank)?;
        if let Some(b) = cfg.box_bound {
            candidate.apply(|v| *v = v.clamp(-b, b));
            if theta_feasible && data.objective(&candidate, &gamma, lambda) > data.objective(&theta, &gamma, lambda) {
                candidate = theta.clone();
            }
        }
        theta = candidate;
        theta_feasible = true;
        // (1.2)
        let (next, f) = data.update_gamma_dense(&theta, &gamma, lambda, &cfg.lasso);
        gamma = next;
        let prev = trace.last().copied();
        trace.push(f);
        if prev.is_some_and(|p| (p - f).abs() < cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok(Stage1Fit {
        theta_hat: theta,
        gamma_hat: gamma,
        objective_trace: trace,
        iterations,
        converged,
        lambda_gamma: lambda,
        rank: cfg.rank,
        ritz_block: None,
    })
}

/// One alternation `Γ -> (Θ(Γ), Γ⁺)` in moment form.
struct Alternation {
    /// `Γ` that formed `M = Y - X Γ'`.
    gamma_in: DMatrix<f64>,
    /// Top-`r` right singular vectors of `M`; `Θ = M V V'`.
    basis: DMatrix<f64>,
    gamma: DMatrix<f64>,
    f: f64,
}

fn alternate(
    data: &CalibrationData,
    cfg: &Stage1Config,
    gamma_in: DMatrix<f64>,
    block: &mut Option<DMatrix<f64>>,
) -> Result<Alternation> {
    let q = data.q();
    let r = cfg.rank;
    // (1.1) Θ = M V V' with V the top-r eigenvectors of M'M
    let (s, xm, ym) = data.residual_moments(&gamma_in);
    let eig = sym_top_eigen(&s, r, block.as_ref())?;
    let v = eig.vectors;
    // (1.2) Lasso rows against X'(Y - Θ)/n and |y_j - θ_j|^2/n
    let c = &data.cxy - (xm * &v) * v.transpose();
    let ymv = ym * &v;
    let yty: Vec<f64> = (0..q)
        .map(|j| {
            let mut cross = 0.0;
            let mut own = 0.0;
            for i in 0..r {
                cross += ymv[(j, i)] * v[(j, i)];
                own += eig.values[i] * v[(j, i)] * v[(j, i)];
            }
            (data.syy[(j, j)] - 2.0 * cross + own).max(0.0)
        })
        .collect();
    *block = Some(eig.block);
    let (gamma, f) = data.solve_rows(&c, &yty, &gamma_in, cfg.lambda_gamma, &cfg.lasso);
    Ok(Alternation {
        gamma_in,
        basis: v,
        gamma,
        f,
    })
}

/// Bounds on the extrapolation step length of the accelerated iteration.
const SQUAREM_MAX_STEP: f64 = 64.0;

/// Same iteration expressed through `X'X`, `X'Y`, `Y'Y`: the truncation needs
/// only the right singular vectors of `M = Y - X Γ'`, i.e. the leading
/// eigenvectors of `M'M`, and the Lasso step only `X'(Y - Θ)` and the row norms
/// of `Y - Θ`. `Θ` is formed once at exit.
///
/// With `accelerate`, every pair of plain alternations is followed by a
/// squared extrapolation of `Γ` and one more alternation from the
/// extrapolated point, kept only if it does not raise `f`.
fn stage1_moments(
    data: &CalibrationData,
    cfg: &Stage1Config,
    theta0: Option<DMatrix<f64>>,
    gamma0: DMatrix<f64>,
    mut block: Option<DMatrix<f64>>,
) -> Result<Stage1Fit> {
    let q = data.q();
    let lambda = cfg.lambda_gamma;
    let mut trace = Vec::new();
    let gamma = match &theta0 {
        Some(t) => {
            let (g, f) = data.update_gamma_dense(t, &gamma0, lambda, &cfg.lasso);
            if init_feasible(t, cfg) {
                trace.push(f);
            }
            g
        }
        None => {
            let yty: Vec<f64> = (0..q).map(|j| data.syy[(j, j)]).collect();
            let (g, f) = data.solve_rows(&data.cxy, &yty, &gamma0, lambda, &cfg.lasso);
            trace.push(f);
            g
        }
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut current: Option<Alternation> = None;
    let mut gamma = gamma;
    // plain step: records f and tests the stopping rule
    let plain = |gamma_in: DMatrix<f64>,
                     trace: &mut Vec<f64>,
                     block: &mut Option<DMatrix<f64>>,
                     iterations: &mut usize|
     -> Result<(Alternation, bool)> {
        *iterations += 1;
        let step = alternate(data, cfg, gamma_in, block)?;
        let prev = trace.last().copied();
        trace.push(step.f);
        let done = prev.is_some_and(|p| (p - step.f).abs() < cfg.tol);
        Ok((step, done))
    };
    while iterations < cfg.max_iter {
        let x0 = gamma.clone();
        let (s1, done) = plain(gamma, &mut trace, &mut block, &mut iterations)?;
        if done || !cfg.accelerate || iterations >= cfg.max_iter {
            converged = done;
            gamma = s1.gamma.clone();
            current = Some(s1);
            if converged {
                break;
            }
            continue;
        }
        let x1 = s1.gamma.clone();
        let (s2, done) = plain(x1.clone(), &mut trace, &mut block, &mut iterations)?;
        if done || iterations >= cfg.max_iter {
            converged = done;
            gamma = s2.gamma.clone();
            current = Some(s2);
            if converged {
                break;
            }
            continue;
        }
        let r = &x1 - &x0;
        let v = &s2.gamma - 2.0 * &x1 + &x0;
        let (rn, vn) = (r.norm(), v.norm());
        let accepted = if vn > 0.0 && rn > 0.0 {
            let alpha = -(rn / vn).clamp(1.0, SQUAREM_MAX_STEP);
            let x_ext = &x0 - 2.0 * alpha * &r + alpha * alpha * &v;
            iterations += 1;
            let mut trial_block = block.clone();
            let s3 = alternate(data, cfg, x_ext, &mut trial_block)?;
            if s3.f <= s2.f {
                trace.push(s3.f);
                block = trial_block;
                s3
            } else {
                s2
            }
        } else {
            s2
        };
        gamma = accepted.gamma.clone();
        current = Some(accepted);
    }
    let (theta_hat, gamma_hat) = match current {
        Some(step) => {
            let m = data.y() - data.x() * step.gamma_in.transpose();
            ((m * &step.basis) * step.basis.transpose(), step.gamma)
        }
        None => (theta0.unwrap_or_else(|| DMatrix::zeros(data.n(), q)), gamma),
    };
    Ok(Stage1Fit {
        theta_hat,
        gamma_hat,
        objective_trace: trace,
        iterations,
        converged,
        lambda_gamma: lambda,
        rank: cfg.rank,
        ritz_block: block,
    })
}

/// Factors and loadings extracted from a hyperplane estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorExtract {
    /// `n x p1`
    pub f_hat: DMatrix<f64>,
    /// `q x p1`, upper block exactly the identity.
    pub lambda_hat: DMatrix<f64>,
}

/// Principal-component factors `√n U` and loadings `V D / √n` from the top
/// `p1` singular triplets, rotated so that the loading's upper block is the
/// identity.
pub fn extract_factors(theta_hat: &DMatrix<f64>, p1: usize) -> Result<FactorExtract> {
    let (n, q) = theta_hat.shape();
    if p1 == 0 || p1 > q.min(n) {
        return Err(FavarError::InvalidArgument(format!(
            "number of factors {p1} outside 1..={}",
            q.min(n)
        )));
    }
    let svd = truncated_svd(theta_hat, p1)?;
    let sqrt_n = (n as f64).sqrt();
    let f_pc = &svd.u * sqrt_n;
    let mut lambda_pc = svd.v.clone();
    for (j, mut col) in lambda_pc.column_iter_mut().enumerate() {
        col *= svd.singular_values[j] / sqrt_n;
    }
    let lead = lambda_pc.rows(0, p1).into_owned();
    let sv = lead.singular_values();
    let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(cond <= MAX_IDENTIFICATION_CONDITION) {
        return Err(FavarError::Identification(cond));
    }
    let lead_inv = lead
        .clone()
        .try_inverse()
        .ok_or(FavarError::Identification(f64::INFINITY))?;
    let f_hat = f_pc * lead.transpose();
    let mut lambda_hat = lambda_pc * lead_inv;
    for i in 0..p1 {
        for j in 0..p1 {
            lambda_hat[(i, j)] = if i == j { 1.0 } else { 0.0 };
        }
    }
    Ok(FactorExtract { f_hat, lambda_hat })
}

/// Response block and stacked-lag design of a VAR(d) regression.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDesign {
    /// Rows `t = d .. n-1` of `Z`.
    pub responses: DMatrix<f64>,
    /// Row `t` is `[z_{t-1}, .., z_{t-d}]`.
    pub design: DMatrix<f64>,
    pub d: usize,
}

impl VarDesign {
    pub fn new(z: &DMatrix<f64>, d: usize) -> Result<Self> {
        let (n, p) = z.shape();
        if d == 0 {
            return Err(FavarError::InvalidArgument("lag order must be >= 1".into()));
        }
        if n <= d {
            return Err(FavarError::InvalidArgument(format!(
                "need more than {d} samples for lag order {d}, got {n}"
            )));
        }
        let n_eff = n - d;
        let responses = z.rows(d, n_eff).into_owned();
        let mut design = DMatrix::zeros(n_eff, d * p);
        for k in 0..d {
            design
                .view_mut((0, k * p), (n_eff, p))
                .copy_from(&z.rows(d - 1 - k, n_eff));
        }
        Ok(Self { responses, design, d })
    }

    pub fn p(&self) -> usize {
        self.responses.ncols()
    }

    pub fn n_eff(&self) -> usize {
        self.responses.nrows()
    }

    /// `max |design' responses / n_eff|`.
    pub fn lambda_max(&self) -> f64 {
        crate::solvers::lambda_max(&self.design, &self.responses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Fit {
    /// `a_hat[k]` is the lag-`k+1` transition estimate, `p x p`.
    pub a_hat: Vec<DMatrix<f64>>,
    pub per_row_converged: Vec<bool>,
    pub lambda_a: f64,
}

impl Stage2Fit {
    pub fn d(&self) -> usize {
        self.a_hat.len()
    }

    /// `[A1 .. Ad]`, the `p x dp` coefficient block of the stacked regression.
    pub fn stacked(&self) -> DMatrix<f64> {
        let p = self.a_hat[0].nrows();
        let mut out = DMatrix::zeros(p, p * self.d());
        for (k, a) in self.a_hat.iter().enumerate() {
            out.view_mut((0, k * p), (p, p)).copy_from(a);
        }
        out
    }

    pub fn nonzeros(&self) -> usize {
        self.a_hat.iter().flat_map(|a| a.iter()).filter(|v| **v != 0.0).count()
    }

    pub fn all_converged(&self) -> bool {
        self.per_row_converged.iter().all(|c| *c)
    }
}

/// Row-wise Lasso estimate of the VAR(d) transitions of `Z = [F̂, X]`.
pub fn stage2_fit(
    f_hat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    d: usize,
    lambda_a: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Stage2Fit> {
    let z = join_columns(f_hat, x)?;
    ensure_centered(&z)?;
    let design = VarDesign::new(&z, d)?;
    let solver = GramLasso::new(&design.design)?;
    let settings = LassoSettings {
        tol,
        max_iter,
        ..LassoSettings::default()
    };
    stage2_fit_design(&design, &solver, lambda_a, &settings, None)
}

/// Stage II on a prepared design; `warm` seeds every row from a previous fit.
pub fn stage2_fit_design(
    design: &VarDesign,
    solver: &GramLasso,
    lambda_a: f64,
    settings: &LassoSettings,
    warm: Option<&Stage2Fit>,
) -> Result<Stage2Fit> {
    if !(lambda_a >= 0.0 && lambda_a.is_finite()) {
        return Err(FavarError::InvalidArgument(format!(
            "lambda_a must be finite and >= 0, got {lambda_a}"
        )));
    }
    let (p, d) = (design.p(), design.d);
    let n = design.n_eff() as f64;
    let xty_all = design.design.tr_mul(&design.responses) / n;
    let warm_rows = warm.map(Stage2Fit::stacked);
    let rows: Vec<(DVector<f64>, bool)> = (0..p)
        .into_par_iter()
        .map(|i| {
            let xty: Vec<f64> = xty_all.column(i).iter().copied().collect();
            let yty = design.responses.column(i).norm_squared() / n;
            let start: Option<Vec<f64>> = warm_rows
                .as_ref()
                .map(|w| w.row(i).iter().copied().collect());
            let sol = solver.solve(&xty, yty, lambda_a, start.as_deref(), settings);
            (sol.beta, sol.converged)
        })
        .collect();
    let mut a_hat = vec![DMatrix::zeros(p, p); d];
    let mut per_row_converged = Vec::with_capacity(p);
    for (i, (beta, ok)) in rows.into_iter().enumerate() {
        for (k, a) in a_hat.iter_mut().enumerate() {
            for j in 0..p {
                a[(i, j)] = beta[k * p + j];
            }
        }
        per_row_converged.push(ok);
    }
    Ok(Stage2Fit {
        a_hat,
        per_row_converged,
        lambda_a,
    })
}

pub(crate) fn join_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(dim_mismatch("joined panels", a.nrows(), b.nrows()));
    }
    let mut z = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    z.columns_mut(0, a.ncols()).copy_from(a);
    z.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    Ok(z)
}
