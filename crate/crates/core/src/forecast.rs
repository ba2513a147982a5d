//! h-step forecasts of the observed block and their accuracy against a
//! random-walk benchmark.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{dim_mismatch, FavarError, Result};

/// Coordinates whose true value is smaller than this in magnitude are left
/// out of the relative-error ratio.
pub const RATIO_EPS: f64 = 1e-12;

/// Iterates `ẑ_{T+k} = Σ_i A_i ẑ_{T+k-i}` from the centered history `z`
/// (rows are time) and returns the last `x_dim` coordinates of `ẑ_{T+h}`
/// with `means` added back.
pub fn forecast_favar(
    z: &DMatrix<f64>,
    a_hat: &[DMatrix<f64>],
    h: usize,
    means: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = a_hat.len();
    if h == 0 {
        return Err(FavarError::InvalidArgument("horizon must be >= 1".into()));
    }
    if d == 0 {
        return Err(FavarError::InvalidArgument("no transition matrices".into()));
    }
    let p = z.ncols();
    if let Some(a) = a_hat.iter().find(|a| a.shape() != (p, p)) {
        return Err(dim_mismatch("transition", format!("{p}x{p}"), crate::model::fmt_shape(a)));
    }
    if z.nrows() < d {
        return Err(FavarError::InvalidArgument(format!(
            "history has {} rows, lag order {d} needs at least {d}",
            z.nrows()
        )));
    }
    if means.len() > p {
        return Err(dim_mismatch("forecast means", format!("at most {p}"), means.len()));
    }
    // lags[0] is the most recent
    let mut lags: Vec<DVector<f64>> = (0..d).map(|i| z.row(z.nrows() - 1 - i).transpose()).collect();
    for _ in 0..h {
        let next = a_hat
            .iter()
            .zip(&lags)
            .fold(DVector::zeros(p), |acc, (a, lag)| acc + a * lag);
        lags.rotate_right(1);
        lags[0] = next;
    }
    let k = means.len();
    Ok(lags[0].rows(p - k, k) + means)
}

/// Random-walk point forecast: the last observation, at every horizon.
pub fn forecast_benchmark(x: &DMatrix<f64>, _h: usize) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(FavarError::InvalidArgument("empty history".into()));
    }
    Ok(x.row(x.nrows() - 1).transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastMetrics {
    /// `‖x̂ - x‖² / ‖x‖²`
    pub rel_err: f64,
    /// Mean absolute relative error of the forecast over that of the
    /// benchmark.
    pub rel_err_ratio: f64,
    /// Coordinates dropped from the ratio for a near-zero truth.
    pub excluded: usize,
}

pub fn forecast_metrics(
    x_hat: &DVector<f64>,
    x_bench: &DVector<f64>,
    x_true: &DVector<f64>,
) -> Result<ForecastMetrics> {
    let k = x_true.len();
    if x_hat.len() != k || x_bench.len() != k {
        return Err(dim_mismatch("forecast vectors", k, format!("{} and {}", x_hat.len(), x_bench.len())));
    }
    let denom = x_true.norm_squared();
    if denom == 0.0 {
        return Err(FavarError::ZeroReference("forecast truth"));
    }
    let rel_err = (x_hat - x_true).norm_squared() / denom;
    let (mut num, mut den, mut used) = (0.0, 0.0, 0usize);
    for j in 0..k {
        let t = x_true[j];
        if t.abs() < RATIO_EPS {
            continue;
        }
        num += ((x_hat[j] - t) / t).abs();
        den += ((x_bench[j] - t) / t).abs();
        used += 1;
    }
    if used == 0 || den == 0.0 {
        return Err(FavarError::ZeroReference("benchmark relative error"));
    }
    Ok(ForecastMetrics {
        rel_err,
        rel_err_ratio: num / den,
        excluded: k - used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_transition_returns_means() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let means = DVector::from_vec(vec![10.0, 20.0]);
        let out = forecast_favar(&z, &[DMatrix::zeros(3, 3)], 3, &means).unwrap();
        assert_eq!(out, means);
    }

    #[test]
    fn var1_two_steps_is_square() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let z = DMatrix::from_row_slice(2, 2, &[9.0, 9.0, 1.0, -2.0]);
        let means = DVector::from_vec(vec![0.5]);
        let out = forecast_favar(&z, std::slice::from_ref(&a), 2, &means).unwrap();
        let expect = &a * &a * DVector::from_vec(vec![1.0, -2.0]);
        assert_abs_diff_eq!(out[0], expect[1] + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn var2_two_steps_hand_recursion() {
        // scalar VAR(2): z_t = 0.5 z_{t-1} + 0.3 z_{t-2}
        let z = DMatrix::from_column_slice(3, 1, &[7.0, 2.0, 1.0]);
        let a = [DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.3)];
        let z1 = 0.5 * 1.0 + 0.3 * 2.0;
        let z2 = 0.5 * z1 + 0.3 * 1.0;
        let out = forecast_favar(&z, &a, 2, &DVector::from_element(1, 0.0)).unwrap();
        assert_abs_diff_eq!(out[0], z2, epsilon = 1e-12);
    }

    #[test]
    fn stable_forecast_decays() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]);
        let z = DMatrix::from_row_slice(1, 2, &[3.0, -4.0]);
        let out = forecast_favar(&z, &[a], 100, &DVector::zeros(2)).unwrap();
        assert!(out.norm() < 1e-6 * 5.0);
    }

    #[test]
    fn forecast_errors() {
        let z = DMatrix::zeros(1, 2);
        let a = [DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)];
        assert!(forecast_favar(&z, &a[..1], 0, &DVector::zeros(1)).is_err());
        assert!(forecast_favar(&z, &a, 1, &DVector::zeros(1)).is_err());
        assert!(forecast_benchmark(&DMatrix::zeros(0, 2), 1).is_err());
    }

    #[test]
    fn benchmark_is_last_row_at_any_horizon() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let one = forecast_benchmark(&x, 1).unwrap();
        assert_eq!(one, DVector::from_vec(vec![5.0, 6.0]));
        assert_eq!(forecast_benchmark(&x, 5).unwrap(), one);
        let single = DMatrix::from_row_slice(1, 2, &[7.0, 8.0]);
        assert_eq!(forecast_benchmark(&single, 2).unwrap(), DVector::from_vec(vec![7.0, 8.0]));
    }

    #[test]
    fn metric_identities() {
        let truth = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let bench = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let exact = forecast_metrics(&truth, &bench, &truth).unwrap();
        assert_eq!((exact.rel_err, exact.rel_err_ratio), (0.0, 0.0));
        let same = forecast_metrics(&bench, &bench, &truth).unwrap();
        assert_eq!(same.rel_err_ratio, 1.0);
        let hat = DVector::from_vec(vec![1.5, -1.0, 0.0]);
        let a = forecast_metrics(&hat, &bench, &truth).unwrap().rel_err;
        let b = forecast_metrics(&(&hat * -3.0), &bench, &(&truth * -3.0)).unwrap().rel_err;
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn near_zero_truth_is_excluded() {
        let truth = DVector::from_vec(vec![1.0, 0.0]);
        let hat = DVector::from_vec(vec![1.5, 3.0]);
        let bench = DVector::from_vec(vec![2.0, -3.0]);
        let m = forecast_metrics(&hat, &bench, &truth).unwrap();
        assert_eq!(m.excluded, 1);
        assert_abs_diff_eq!(m.rel_err_ratio, 0.5, epsilon = 1e-15);
        assert!(forecast_metrics(&bench, &bench, &DVector::zeros(2)).is_err());
    }
}
