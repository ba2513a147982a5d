//! End-to-end two-stage fit on raw panels: centering, Stage-I selection,
//! factor extraction, Stage-II selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, FavarError, Result};
use crate::estimate::{extract_factors, join_columns, CalibrationData};
use crate::forecast::forecast_favar;
use crate::model::center_matrix;
use crate::select::{
    select_stage1, select_stage2, BicRow, PicRow, SelectionGrid, Stage1Options,
};
use crate::solvers::LassoSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub grid: SelectionGrid,
    pub stage1: Stage1Options,
    pub stage2: LassoSettings,
    /// VAR lag order.
    pub d: usize,
    /// Number of factors to extract; the selected rank when absent.
    pub factors: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid: SelectionGrid::default(),
            stage1: Stage1Options::default(),
            stage2: LassoSettings::default(),
            d: 1,
            factors: None,
        }
    }
}

/// Estimates of both stages plus what is needed to forecast from them.
#[derive(Debug, Clone)]
pub struct FavarFit {
    pub theta_hat: DMatrix<f64>,
    /// `q x p2`
    pub gamma_hat: DMatrix<f64>,
    /// `n x p1`
    pub f_hat: DMatrix<f64>,
    /// `q x p1`
    pub lambda_hat: DMatrix<f64>,
    /// Lag-ordered transitions over `(F̂, X)`.
    pub a_hat: Vec<DMatrix<f64>>,
    pub lambda_gamma: f64,
    pub rank: usize,
    pub lambda_a: f64,
    pub objective_trace: Vec<f64>,
    pub stage1_iterations: usize,
    /// Centered observed panel the VAR was fitted on.
    pub x_centered: DMatrix<f64>,
    pub x_means: DVector<f64>,
    pub y_means: DVector<f64>,
    pub pic_scores: Vec<PicRow>,
    pub bic_scores: Vec<BicRow>,
}

impl FavarFit {
    pub fn p1(&self) -> usize {
        self.f_hat.ncols()
    }

    pub fn d(&self) -> usize {
        self.a_hat.len()
    }

    /// `h`-step forecast of the observed block, on the original scale.
    pub fn forecast(&self, h: usize) -> Result<DVector<f64>> {
        let z = join_columns(&self.f_hat, &self.x_centered)?;
        forecast_favar(&z, &self.a_hat, h, &self.x_means)
    }
}

/// Two-stage fit of raw (uncentered) panels `x` (`n x p2`) and `y` (`n x q`).
pub fn fit_favar(x: &DMatrix<f64>, y: &DMatrix<f64>, opts: &FitOptions) -> Result<FavarFit> {
    if x.nrows() != y.nrows() {
        return Err(dim_mismatch("panel rows", x.nrows(), y.nrows()));
    }
    let (xc, x_means) = center_matrix(x);
    let (yc, y_means) = center_matrix(y);
    let data = CalibrationData::new(&xc, &yc)?;
    let s1 = select_stage1(&data, &opts.grid, &opts.stage1)?;
    let p1 = opts.factors.unwrap_or(s1.rank);
    if p1 > s1.rank {
        return Err(FavarError::InvalidArgument(format!(
            "cannot extract {p1} factors from a rank-{} hyperplane",
            s1.rank
        )));
    }
    let ex = extract_factors(&s1.fit.theta_hat, p1)?;
    // the extracted factors are centered up to rounding; remove it exactly
    let (f_hat, _) = center_matrix(&ex.f_hat);
    let s2 = select_stage2(&f_hat, &xc, opts.d, &opts.grid.lambda_a, &opts.stage2)?;
    Ok(FavarFit {
        theta_hat: s1.fit.theta_hat,
        gamma_hat: s1.fit.gamma_hat,
        f_hat,
        lambda_hat: ex.lambda_hat,
        a_hat: s2.fit.a_hat,
        lambda_gamma: s1.lambda_gamma,
        rank: s1.rank,
        lambda_a: s2.lambda_a,
        objective_trace: s1.fit.objective_trace,
        stage1_iterations: s1.fit.iterations,
        x_centered: xc,
        x_means,
        y_means,
        pic_scores: s1.scores,
        bic_scores: s2.scores,
    })
}
