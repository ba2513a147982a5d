//! Estimation-quality measures: support recovery and relative Frobenius
//! errors, plus the padding that lines up estimates whose factor count
//! differs from the truth.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{dim_mismatch, FavarError, Result};
use crate::model::fmt_shape;

/// Threshold for counting entries of dense estimates as nonzero.
pub const DENSE_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `tp / (tp + fn)`; NaN when the truth has no nonzeros.
    pub sen: f64,
    /// `tn / (tn + fp)`; NaN when the truth has no zeros.
    pub spc: f64,
}

fn same_shape(context: &'static str, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_mismatch(context, fmt_shape(b), fmt_shape(a)));
    }
    Ok(())
}

/// Sensitivity and specificity of the estimated support; an entry is nonzero
/// when its magnitude exceeds `zero_tol`.
pub fn support_metrics(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, zero_tol: f64) -> Result<SupportMetrics> {
    same_shape("support metrics", estimate, truth)?;
    if !(zero_tol >= 0.0) {
        return Err(FavarError::InvalidArgument(format!("zero_tol must be >= 0, got {zero_tol}")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (e, t) in estimate.iter().zip(truth.iter()) {
        match (e.abs() > zero_tol, t.abs() > zero_tol) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b > 0 { a as f64 / (a + b) as f64 } else { f64::NAN };
    Ok(SupportMetrics {
        tp,
        fp,
        tn,
        fn_,
        sen: ratio(tp, fn_),
        spc: ratio(tn, fp),
    })
}

/// `‖estimate - truth‖_F / ‖truth‖_F`.
pub fn rel_frob_err(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    same_shape("relative error", estimate, truth)?;
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(FavarError::ZeroReference("relative error truth"));
    }
    Ok((estimate - truth).norm() / denom)
}

/// Relative errors of factors and loadings. Both sides are normalized so that
/// the loading's upper block is the identity, which pins the rotation; no
/// further alignment is performed.
pub fn factor_errors(
    f_hat: &DMatrix<f64>,
    lambda_hat: &DMatrix<f64>,
    f_true: &DMatrix<f64>,
    lambda_true: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    Ok((rel_frob_err(f_hat, f_true)?, rel_frob_err(lambda_hat, lambda_true)?))
}

/// Widens `m` to `cols` columns with zeros on the right.
pub fn pad_columns(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.max(m.ncols()));
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

/// Re-indexes a transition matrix over `(factors, observed)` with `r` factor
/// coordinates onto a layout with `k >= r` factor slots, filling the extra
/// slots with zeros. The observed block keeps its position relative to the
/// end of the factor block.
pub fn pad_factor_block(a: &DMatrix<f64>, r: usize, k: usize) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.nrows() < r || k < r {
        return Err(FavarError::InvalidArgument(format!(
            "cannot pad {} with {r} factors to {k} slots",
            fmt_shape(a)
        )));
    }
    let p2 = a.nrows() - r;
    let map = |i: usize| if i < r { i } else { i - r + k };
    let mut out = DMatrix::zeros(k + p2, k + p2);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            out[(map(i), map(j))] = a[(i, j)];
        }
    }
    Ok(out)
}

/// Lower-right observed block of a transition matrix with `r` factors.
pub fn observed_block(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let p2 = a.nrows() - r;
    a.view((r, r), (p2, p2)).into_owned()
}

/// Mean and sample standard deviation of the finite values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let k = finite.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = finite.iter().sum::<f64>() / k as f64;
    let sd = if k > 1 {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}
