//! Shared data model: observation panels, generative FAVAR parameters and the
//! companion-form lifting used for stability checks.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{dim_mismatch, FavarError, Result};

/// An `n x m` panel of observations, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl TimeSeriesPanel {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(FavarError::InvalidArgument(format!(
                "panel needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(dim_mismatch("panel labels", values.ncols(), labels.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FavarError::NonFinite("panel values"));
        }
        Ok(Self { values, labels })
    }

    /// Builds a panel with labels `{prefix}1 .. {prefix}m`.
    pub fn with_prefix(values: DMatrix<f64>, prefix: &str) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|j| format!("{prefix}{j}")).collect();
        Self::new(values, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.n() || start >= end {
            return Err(FavarError::InvalidArgument(format!(
                "row range {start}..{end} outside panel of {} rows",
                self.n()
            )));
        }
        Self::new(
            self.values.rows(start, end - start).into_owned(),
            self.labels.clone(),
        )
    }
}

/// Full generative parameter set of a FAVAR(d) system.
///
/// `transitions[k]` is the lag-`k+1` matrix acting on `z = (f, x)`, with the
/// factor block first. Noise covariances are diagonal and stored as standard
/// deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct FavarParams {
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
    pub transitions: Vec<DMatrix<f64>>,
    pub loading: DMatrix<f64>,
    pub coeff: DMatrix<f64>,
    pub sigma_wf: DVector<f64>,
    pub sigma_wx: DVector<f64>,
    pub sigma_e: DVector<f64>,
}

impl FavarParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p1: usize,
        p2: usize,
        transitions: Vec<DMatrix<f64>>,
        loading: DMatrix<f64>,
        coeff: DMatrix<f64>,
        sigma_wf: DVector<f64>,
        sigma_wx: DVector<f64>,
        sigma_e: DVector<f64>,
    ) -> Result<Self> {
        let p = p1 + p2;
        let q = loading.nrows();
        if transitions.is_empty() {
            return Err(FavarError::InvalidArgument("lag order must be >= 1".into()));
        }
        for a in &transitions {
            if a.shape() != (p, p) {
                return Err(dim_mismatch("transition", format!("{p}x{p}"), fmt_shape(a)));
            }
        }
        if loading.ncols() != p1 {
            return Err(dim_mismatch("loading", format!("{q}x{p1}"), fmt_shape(&loading)));
        }
        if coeff.shape() != (q, p2) {
            return Err(dim_mismatch("coeff", format!("{q}x{p2}"), fmt_shape(&coeff)));
        }
        if sigma_wf.len() != p1 || sigma_wx.len() != p2 || sigma_e.len() != q {
            return Err(dim_mismatch(
                "noise scales",
                format!("({p1}, {p2}, {q})"),
                format!("({}, {}, {})", sigma_wf.len(), sigma_wx.len(), sigma_e.len()),
            ));
        }
        let all_sd = sigma_wf.iter().chain(sigma_wx.iter()).chain(sigma_e.iter());
        if all_sd.clone().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(FavarError::InvalidArgument(
                "noise standard deviations must be finite and > 0".into(),
            ));
        }
        Ok(Self {
            p1,
            p2,
            q,
            transitions,
            loading,
            coeff,
            sigma_wf,
            sigma_wx,
            sigma_e,
        })
    }

    pub fn d(&self) -> usize {
        self.transitions.len()
    }

    pub fn p(&self) -> usize {
        self.p1 + self.p2
    }

    /// Standard deviations of the joint VAR innovation `(w^F, w^X)`.
    pub fn sigma_w(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            self.sigma_wf.iter().chain(self.sigma_wx.iter()).copied(),
        )
    }

    /// True when the upper `p1 x p1` block of the loading is exactly the identity.
    pub fn is_ir_normalized(&self) -> bool {
        is_ir_normalized(&self.loading)
    }

    pub fn companion(&self) -> Result<CompanionForm> {
        build_companion(&self.transitions)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(self.companion()?.matrix())
    }

    /// Factor hyperplane `F Λ'` for a panel of factor samples.
    pub fn factor_hyperplane(&self, factors: &DMatrix<f64>) -> DMatrix<f64> {
        factors * self.loading.transpose()
    }
}

pub(crate) fn is_ir_normalized(loading: &DMatrix<f64>) -> bool {
    let p1 = loading.ncols();
    if loading.nrows() < p1 {
        return false;
    }
    (0..p1).all(|i| (0..p1).all(|j| loading[(i, j)] == if i == j { 1.0 } else { 0.0 }))
}

/// Extracts standard deviations from a covariance that must be diagonal.
pub fn diagonal_sd(cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !cov.is_square() {
        return Err(dim_mismatch("covariance", "square", fmt_shape(cov)));
    }
    for i in 0..cov.nrows() {
        for j in 0..cov.ncols() {
            if i != j && cov[(i, j)] != 0.0 {
                return Err(FavarError::InvalidArgument(format!(
                    "only diagonal noise covariances are supported (entry ({i}, {j}) = {})",
                    cov[(i, j)]
                )));
            }
        }
    }
    let sd = cov.diagonal().map(f64::sqrt);
    if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(FavarError::InvalidArgument(
            "covariance diagonal must be positive".into(),
        ));
    }
    Ok(sd)
}

/// VAR(1) lifting of a VAR(d) system.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionForm {
    matrix: DMatrix<f64>,
    d: usize,
    p: usize,
}

impl CompanionForm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.matrix)
    }
}

/// Stacks `[A1 .. Ad]` on top of shifted identity blocks.
pub fn build_companion(transitions: &[DMatrix<f64>]) -> Result<CompanionForm> {
    let first = transitions
        .first()
        .ok_or_else(|| FavarError::InvalidArgument("no transition matrices".into()))?;
    let p = first.nrows();
    for a in transitions {
        if a.shape() != (p, p) {
            return Err(dim_mismatch("transition", format!("{p}x{p}"), fmt_shape(a)));
        }
    }
    let d = transitions.len();
    let mut matrix = DMatrix::zeros(d * p, d * p);
    for (k, a) in transitions.iter().enumerate() {
        matrix.view_mut((0, k * p), (p, p)).copy_from(a);
    }
    for k in 1..d {
        for i in 0..p {
            matrix[(k * p + i, (k - 1) * p + i)] = 1.0;
        }
    }
    Ok(CompanionForm { matrix, d, p })
}

/// Francis iterations allowed per Schur attempt, per row of the matrix.
const SCHUR_ITER_PER_ROW: usize = 200;
/// Similarity transforms tried when the plain Schur iteration stalls.
const SCHUR_RETRIES: u64 = 4;

/// Largest eigenvalue modulus, from the real Schur form.
///
/// The shifted QR iteration can stall on highly structured inputs (cyclic
/// permutations, sparse companion blocks). On a stall the matrix is replaced
/// by `Q' M Q` for a fixed orthogonal `Q`, which has the same spectrum.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(dim_mismatch("spectral radius", "square", fmt_shape(m)));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FavarError::NonFinite("spectral radius input"));
    }
    if m.is_empty() || m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let max_iter = SCHUR_ITER_PER_ROW * m.nrows().max(1);
    let radius = |a: DMatrix<f64>| {
        Schur::try_new(a, f64::EPSILON, max_iter)
            .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
    };
    if let Some(r) = radius(m.clone()) {
        return Ok(r);
    }
    for attempt in 0..SCHUR_RETRIES {
        let q = fixed_orthogonal(m.nrows(), attempt);
        if let Some(r) = radius(q.tr_mul(m) * &q) {
            return Ok(r);
        }
    }
    Err(FavarError::Decomposition("Schur iteration did not converge".into()))
}

/// Deterministic orthogonal matrix: the Q factor of a fixed pseudo-random
/// matrix indexed by `stream`.
fn fixed_orthogonal(n: usize, stream: u64) -> DMatrix<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5EED_F0A7 ^ stream);
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

/// Column means of a matrix.
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Subtracts column means; returns the centered matrix and the means.
pub fn center_matrix(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let means = column_means(m);
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (out, means)
}

/// Centers every column; the means are returned for de-centering forecasts.
pub fn center_columns(panel: &TimeSeriesPanel) -> (TimeSeriesPanel, DVector<f64>) {
    let (values, means) = center_matrix(panel.values());
    (
        TimeSeriesPanel {
            values,
            labels: panel.labels.clone(),
        },
        means,
    )
}

/// Rejects columns whose mean is not negligible relative to their spread.
pub(crate) fn ensure_centered(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows() as f64;
    for (j, col) in m.column_iter().enumerate() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = col.amax();
        if mean.abs() > 1e-8 * sd.max(1e-8 * scale).max(f64::MIN_POSITIVE) {
            return Err(FavarError::NotCentered { column: j, mean, sd });
        }
    }
    Ok(())
}

pub(crate) fn fmt_shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Largest root modulus of x^2 - a1 x - a2.
    fn quadratic_oracle(a1: f64, a2: f64) -> f64 {
        let disc = a1 * a1 + 4.0 * a2;
        if disc >= 0.0 {
            let r1 = (a1 + disc.sqrt()) / 2.0;
            let r2 = (a1 - disc.sqrt()) / 2.0;
            r1.abs().max(r2.abs())
        } else {
            (-a2).sqrt()
        }
    }

    #[test]
    fn companion_of_single_lag_is_the_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let c = build_companion(std::slice::from_ref(&a)).unwrap();
        assert_eq!(c.matrix(), &a);
        assert_eq!((c.d(), c.p()), (1, 2));
    }

    #[test]
    fn companion_of_zero_lags() {
        let z = DMatrix::zeros(2, 2);
        let c = build_companion(&[z.clone(), z]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0., 0., 0., 0., //
                0., 0., 0., 0., //
                1., 0., 0., 0., //
                0., 1., 0., 0.,
            ],
        );
        assert_eq!(c.matrix(), &expected);
    }

    #[test]
    fn scalar_ar2_companion_radius_matches_quadratic_root() {
        let c = build_companion(&[
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.3),
        ])
        .unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 1.0, 0.0]));
        let expected = quadratic_oracle(0.5, 0.3);
        assert_abs_diff_eq!(expected, 0.852_079_728_939_615, epsilon = 1e-12);
        assert_abs_diff_eq!(c.spectral_radius().unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn companion_rejects_mixed_dimensions() {
        let err = build_companion(&[DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)]);
        assert!(matches!(err, Err(FavarError::DimensionMismatch { .. })));
    }

    #[test]
    fn spectral_radius_simple_cases() {
        assert_abs_diff_eq!(
            spectral_radius(&DMatrix::identity(3, 3)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        // rotation by 90 degrees scaled by 0.7: complex pair of modulus 0.7
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&rot).unwrap(), 0.7, epsilon = 1e-12);
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(spectral_radius(&bad), Err(FavarError::NonFinite(_))));
    }

    #[test]
    fn spectral_radius_of_cyclic_permutations() {
        // unshifted-QR stall cases: every eigenvalue has modulus 0.6
        for n in 2..9 {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                m[((i + 1) % n, i)] = 0.6;
            }
            assert_abs_diff_eq!(spectral_radius(&m).unwrap(), 0.6, epsilon = 1e-10);
            let c = build_companion(&[DMatrix::zeros(n, n), m.clone()]).unwrap();
            assert_abs_diff_eq!(c.spectral_radius().unwrap(), 0.6f64.sqrt(), epsilon = 1e-8);
        }
    }

    #[test]
    fn centering() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 3.0, 4.0]);
        let panel = TimeSeriesPanel::with_prefix(m, "s").unwrap();
        let (c, means) = center_columns(&panel);
        assert_eq!(means.as_slice(), &[2.0, 4.0]);
        assert_eq!(c.values().column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(c.values().column(1).as_slice(), &[0.0, 0.0, 0.0]);
        let (again, means2) = center_columns(&c);
        assert_eq!(again.values(), c.values());
        assert!(means2.iter().all(|m| *m == 0.0));
        assert!(ensure_centered(c.values()).is_ok());
        assert!(ensure_centered(panel.values()).is_err());
    }

    #[test]
    fn panel_invariants() {
        assert!(TimeSeriesPanel::with_prefix(DMatrix::zeros(1, 2), "x").is_err());
        assert!(TimeSeriesPanel::new(DMatrix::zeros(3, 2), vec!["a".into()]).is_err());
        let mut m = DMatrix::zeros(3, 1);
        m[(1, 0)] = f64::INFINITY;
        assert!(TimeSeriesPanel::with_prefix(m, "x").is_err());
    }

    #[test]
    fn diagonal_covariances_only() {
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        assert_eq!(diagonal_sd(&diag).unwrap().as_slice(), &[2.0, 3.0]);
        let mut full = diag.clone();
        full[(0, 1)] = 0.5;
        assert!(diagonal_sd(&full).is_err());
    }
}
