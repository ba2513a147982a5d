//! Synthetic FAVAR systems: sparse stable transitions rescaled to a target
//! spectral radius, IR-normalized loadings, sparse calibration coefficients and
//! Gaussian or heavy-tailed innovations.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{FavarError, Result};
use crate::model::{build_companion, FavarParams, TimeSeriesPanel};

const MAX_REDRAWS: usize = 100;

/// Innovation distribution, always scaled to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[derive(Default)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Student-t with `nu > 2` degrees of freedom.
    StudentT { nu: f64 },
    /// `(Z^2 - 1)/sqrt(2)` for standard normal `Z`.
    SubExponential,
}


impl NoiseFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::StudentT { nu } if !(nu > 2.0 && nu.is_finite()) => Err(
                FavarError::InvalidArgument(format!("student-t needs nu > 2 for finite variance, got {nu}")),
            ),
            _ => Ok(()),
        }
    }

    /// Builds a unit-variance sampler.
    pub fn sampler(&self) -> Result<NoiseSampler> {
        self.validate()?;
        Ok(match *self {
            Self::Gaussian => NoiseSampler::Gaussian,
            Self::StudentT { nu } => NoiseSampler::StudentT {
                dist: StudentT::new(nu).map_err(|e| FavarError::InvalidArgument(e.to_string()))?,
                scale: ((nu - 2.0) / nu).sqrt(),
            },
            Self::SubExponential => NoiseSampler::SubExponential,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NoiseSampler {
    Gaussian,
    StudentT { dist: StudentT<f64>, scale: f64 },
    SubExponential,
}

impl NoiseSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::StudentT { dist, scale } => dist.sample(rng) * scale,
            Self::SubExponential => {
                let z: f64 = rng.sample(StandardNormal);
                (z * z - 1.0) / std::f64::consts::SQRT_2
            }
        }
    }
}

/// Proportion of nonzero entries in each block of one transition matrix,
/// ordered as `(F->F, X->F, F->X, X->X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDensity {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl BlockDensity {
    pub fn uniform(s: f64) -> Self {
        Self {
            a11: s,
            a12: s,
            a21: s,
            a22: s,
        }
    }

    fn all(&self) -> [f64; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }
}

fn default_magnitude() -> (f64, f64) {
    (1.2, 1.5)
}
fn default_transition_magnitude() -> (f64, f64) {
    (0.6, 1.0)
}
fn default_burn_in() -> usize {
    500
}
fn default_sigma() -> f64 {
    1.0
}

/// Full recipe for one synthetic FAVAR system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
    /// Sample size handed to the estimator.
    pub n: usize,
    /// One entry per lag; the lag order is its length.
    pub lag_densities: Vec<BlockDensity>,
    /// Proportion of nonzero entries in `Γ`.
    pub gamma_density: f64,
    pub target_rho: f64,
    pub snr: f64,
    #[serde(default)]
    pub noise: NoiseFamily,
    #[serde(default)]
    pub calibration_noise: NoiseFamily,
    /// Nonzero `Γ` entries are drawn from `±[lo, hi]`.
    #[serde(default = "default_magnitude")]
    pub gamma_magnitude: (f64, f64),
    /// Bottom-block `Λ` entries are drawn from `±[lo, hi]`.
    #[serde(default = "default_magnitude")]
    pub loading_magnitude: (f64, f64),
    /// Pre-rescaling magnitudes of nonzero transition entries.
    #[serde(default = "default_transition_magnitude")]
    pub transition_magnitude: (f64, f64),
    /// Standard deviation of every VAR innovation coordinate.
    #[serde(default = "default_sigma")]
    pub sigma_w: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn d(&self) -> usize {
        self.lag_densities.len()
    }

    pub fn p(&self) -> usize {
        self.p1 + self.p2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FavarError::InvalidArgument(msg));
        if self.lag_densities.is_empty() {
            return bad("at least one lag is required".into());
        }
        if self.p1 == 0 || self.p2 == 0 || self.q < self.p1 {
            return bad(format!(
                "need p1 >= 1, p2 >= 1 and q >= p1 (got p1={}, p2={}, q={})",
                self.p1, self.p2, self.q
            ));
        }
        if !(self.target_rho > 0.0 && self.target_rho < 1.0) {
            return bad(format!("target_rho must lie in (0, 1), got {}", self.target_rho));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad(format!("snr must be finite and > 0, got {}", self.snr));
        }
        let densities = self
            .lag_densities
            .iter()
            .flat_map(BlockDensity::all)
            .chain(std::iter::once(self.gamma_density));
        for s in densities {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("density {s} outside [0, 1]"));
            }
        }
        for (name, (lo, hi)) in [
            ("gamma_magnitude", self.gamma_magnitude),
            ("loading_magnitude", self.loading_magnitude),
            ("transition_magnitude", self.transition_magnitude),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return bad(format!("{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
            }
        }
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return bad(format!("sigma_w must be > 0, got {}", self.sigma_w));
        }
        if self.n < self.d() + 1 {
            return bad(format!("n = {} too small for lag order {}", self.n, self.d()));
        }
        self.noise.validate()?;
        self.calibration_noise.validate()
    }

    /// Preset simulation settings A1-A4, B1-B3 and C1-C4.
    pub fn setting(id: &str) -> Result<Self> {
        let upper = id.to_ascii_uppercase();
        let base = |q: usize, p1: usize, p2: usize, lags: Vec<BlockDensity>, snr: f64| SimConfig {
            p1,
            p2,
            q,
            n: 200,
            lag_densities: lags,
            gamma_density: 5.0 / p2 as f64,
            target_rho: DEFAULT_TARGET_RHO,
            snr,
            noise: NoiseFamily::Gaussian,
            calibration_noise: NoiseFamily::Gaussian,
            gamma_magnitude: default_magnitude(),
            loading_magnitude: default_magnitude(),
            transition_magnitude: default_transition_magnitude(),
            sigma_w: 1.0,
            burn_in: default_burn_in(),
            seed: 0,
        };
        let uni = |s: f64, p1: usize, p2: usize| BlockDensity::uniform(s / (p1 + p2) as f64);
        let cfg = match upper.as_str() {
            "A1" => base(100, 5, 50, vec![uni(3.0, 5, 50)], 1.5),
            "A2" => base(200, 10, 100, vec![uni(3.0, 10, 100)], 1.5),
            "A3" => base(
                200,
                5,
                100,
                vec![BlockDensity {
                    a11: 3.0 / 5.0,
                    a12: 2.0 / 100.0,
                    a21: 2.0 / 5.0,
                    a22: 2.0 / 100.0,
                }],
                1.5,
            ),
            "A4" => base(
                300,
                5,
                500,
                vec![BlockDensity {
                    a11: 3.0 / 5.0,
                    a12: 2.0 / 500.0,
                    a21: 0.8,
                    a22: 2.0 / 500.0,
                }],
                1.5,
            ),
            "B1" => base(200, 5, 100, vec![uni(3.0, 5, 100), uni(2.0, 5, 100)], 2.0),
            "B2" => base(
                200,
                5,
                100,
                vec![
                    BlockDensity {
                        a11: 0.5,
                        a12: 3.0 / 100.0,
                        a21: 0.5,
                        a22: 3.0 / 100.0,
                    },
                    BlockDensity {
                        a11: 0.2,
                        a12: 2.0 / 100.0,
                        a21: 0.25,
                        a22: 2.0 / 100.0,
                    },
                    uni(2.0, 5, 100),
                    uni(2.0, 5, 100),
                ],
                2.0,
            ),
            "B3" => base(
                100,
                5,
                25,
                vec![
                    BlockDensity {
                        a11: 0.5,
                        a12: 2.0 / 25.0,
                        a21: 0.5,
                        a22: 2.0 / 25.0,
                    },
                    BlockDensity {
                        a11: 0.2,
                        a12: 1.5 / 25.0,
                        a21: 0.1,
                        a22: 1.5 / 25.0,
                    },
                    uni(1.0, 5, 25),
                    uni(0.8, 5, 25),
                ],
                2.0,
            ),
            "C1" => Self {
                noise: NoiseFamily::StudentT { nu: 4.0 },
                ..Self::setting("A1")?
            },
            "C2" => Self {
                noise: NoiseFamily::StudentT { nu: 8.0 },
                ..Self::setting("B1")?
            },
            "C3" => Self {
                noise: NoiseFamily::SubExponential,
                ..Self::setting("B2")?
            },
            "C4" => Self {
                noise: NoiseFamily::SubExponential,
                n: 500,
                ..Self::setting("B2")?
            },
            _ => {
                return Err(FavarError::InvalidArgument(format!(
                    "unknown setting id '{id}' (expected A1-A4, B1-B3 or C1-C4)"
                )))
            }
        };
        Ok(cfg)
    }
}

/// Spectral radius of the companion matrix used by the preset settings.
pub const DEFAULT_TARGET_RHO: f64 = 0.8;

/// Deterministic, independent RNG stream derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PARAMS: u64 = 1;
const STREAM_PATH: u64 = 2;
const STREAM_CALIBRATION: u64 = 3;

pub(crate) fn signed_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let mag = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    if rng.gen_bool(0.5) {
        mag
    } else {
        -mag
    }
}

pub(crate) fn sparse_block<R: Rng + ?Sized>(
    rng: &mut R,
    out: &mut DMatrix<f64>,
    (r0, c0): (usize, usize),
    (rows, cols): (usize, usize),
    density: f64,
    magnitude: (f64, f64),
) {
    let keep = Bernoulli::new(density).expect("density validated");
    for j in 0..cols {
        for i in 0..rows {
            if keep.sample(rng) {
                out[(r0 + i, c0 + j)] = signed_uniform(rng, magnitude);
            }
        }
    }
}

/// Scales lag `i` by `zeta^i` with `zeta = target / rho(companion)`, which
/// scales every companion eigenvalue by `zeta`.
pub fn rescale_transitions(transitions: &[DMatrix<f64>], target_rho: f64) -> Result<Vec<DMatrix<f64>>> {
    let rho = build_companion(transitions)?.spectral_radius()?;
    if rho == 0.0 {
        return Err(FavarError::DegenerateDraw(
            "transition draw has zero spectral radius".into(),
        ));
    }
    let zeta = target_rho / rho;
    Ok(transitions
        .iter()
        .enumerate()
        .map(|(i, a)| a * zeta.powi(i as i32 + 1))
        .collect())
}

/// Draws transitions, loading and coefficient matrices. `sigma_e` is a
/// placeholder of ones until [`gen_calibration`] sets it.
pub fn gen_params(cfg: &SimConfig) -> Result<FavarParams> {
    cfg.validate()?;
    gen_params_with(cfg, &mut stream_rng(cfg.seed, STREAM_PARAMS))
}

pub fn gen_params_with<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<FavarParams> {
    let (p1, p2, q, p) = (cfg.p1, cfg.p2, cfg.q, cfg.p());
    let mut transitions = None;
    for _ in 0..MAX_REDRAWS {
        let raw: Vec<DMatrix<f64>> = cfg
            .lag_densities
            .iter()
            .map(|dens| {
                let mut a = DMatrix::zeros(p, p);
                let mag = cfg.transition_magnitude;
                sparse_block(rng, &mut a, (0, 0), (p1, p1), dens.a11, mag);
                sparse_block(rng, &mut a, (0, p1), (p1, p2), dens.a12, mag);
                sparse_block(rng, &mut a, (p1, 0), (p2, p1), dens.a21, mag);
                sparse_block(rng, &mut a, (p1, p1), (p2, p2), dens.a22, mag);
                a
            })
            .collect();
        match rescale_transitions(&raw, cfg.target_rho) {
            Ok(t) => {
                transitions = Some(t);
                break;
            }
            Err(FavarError::DegenerateDraw(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let transitions = transitions.ok_or_else(|| {
        FavarError::DegenerateDraw(format!(
            "no draw with positive spectral radius in {MAX_REDRAWS} attempts"
        ))
    })?;

    let mut loading = DMatrix::zeros(q, p1);
    for i in 0..p1 {
        loading[(i, i)] = 1.0;
    }
    for j in 0..p1 {
        for i in p1..q {
            loading[(i, j)] = signed_uniform(rng, cfg.loading_magnitude);
        }
    }
    let mut coeff = DMatrix::zeros(q, p2);
    sparse_block(rng, &mut coeff, (0, 0), (q, p2), cfg.gamma_density, cfg.gamma_magnitude);

    FavarParams::new(
        p1,
        p2,
        transitions,
        loading,
        coeff,
        DVector::from_element(p1, cfg.sigma_w),
        DVector::from_element(p2, cfg.sigma_w),
        DVector::from_element(q, 1.0),
    )
}

/// Runs the joint VAR(d) recursion from a zero state and returns the last `n`
/// samples after `burn_in` discarded steps.
pub fn gen_var_path(
    params: &FavarParams,
    n: usize,
    noise: NoiseFamily,
    burn_in: usize,
    seed: u64,
) -> Result<(TimeSeriesPanel, TimeSeriesPanel)> {
    gen_var_path_with(params, n, noise, burn_in, &mut stream_rng(seed, STREAM_PATH))
}

pub fn gen_var_path_with<R: Rng + ?Sized>(
    params: &FavarParams,
    n: usize,
    noise: NoiseFamily,
    burn_in: usize,
    rng: &mut R,
) -> Result<(TimeSeriesPanel, TimeSeriesPanel)> {
    let d = params.d();
    if n < d + 1 {
        return Err(FavarError::InvalidArgument(format!(
            "n = {n} too small for lag order {d}"
        )));
    }
    let rho = params.spectral_radius()?;
    if rho >= 1.0 {
        return Err(FavarError::Unstable(rho));
    }
    let sampler = noise.sampler()?;
    let p = params.p();
    let sigma = params.sigma_w();
    let total = burn_in + n;
    // history[k] holds z_{t-1-k}
    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(p); d];
    let mut z_all = DMatrix::zeros(n, p);
    for t in 0..total {
        let mut z = DVector::from_fn(p, |i, _| sigma[i] * sampler.draw(rng));
        for (a, lagged) in params.transitions.iter().zip(&history) {
            z.gemv(1.0, a, lagged, 1.0);
        }
        if t >= burn_in {
            z_all.row_mut(t - burn_in).copy_from(&z.transpose());
        }
        history.rotate_right(1);
        history[0] = z;
    }
    let f = z_all.columns(0, params.p1).into_owned();
    let x = z_all.columns(params.p1, params.p2).into_owned();
    Ok((
        TimeSeriesPanel::with_prefix(f, "F")?,
        TimeSeriesPanel::with_prefix(x, "X")?,
    ))
}

/// `Y = F Λ' + X Γ' + E` with per-coordinate noise scales chosen so that
/// `sd(signal_j) / sigma_e_j = snr` for every coordinate.
#[allow(clippy::too_many_arguments)]
pub fn gen_calibration(
    f: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    loading: &DMatrix<f64>,
    coeff: &DMatrix<f64>,
    snr: f64,
    noise: NoiseFamily,
    seed: u64,
) -> Result<(TimeSeriesPanel, DVector<f64>)> {
    gen_calibration_with(
        f,
        x,
        loading,
        coeff,
        snr,
        noise,
        &mut stream_rng(seed, STREAM_CALIBRATION),
    )
}

pub fn gen_calibration_with<R: Rng + ?Sized>(
    f: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    loading: &DMatrix<f64>,
    coeff: &DMatrix<f64>,
    snr: f64,
    noise: NoiseFamily,
    rng: &mut R,
) -> Result<(TimeSeriesPanel, DVector<f64>)> {
    if f.n() != x.n() {
        return Err(crate::error::dim_mismatch("calibration rows", f.n(), x.n()));
    }
    if loading.ncols() != f.m() || coeff.ncols() != x.m() || loading.nrows() != coeff.nrows() {
        return Err(crate::error::dim_mismatch(
            "calibration coefficients",
            format!("q x {} and q x {}", f.m(), x.m()),
            format!(
                "{}x{} and {}x{}",
                loading.nrows(),
                loading.ncols(),
                coeff.nrows(),
                coeff.ncols()
            ),
        ));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(FavarError::InvalidArgument(format!("snr must be finite and > 0, got {snr}")));
    }
    let sampler = noise.sampler()?;
    let signal = f.values() * loading.transpose() + x.values() * coeff.transpose();
    let q = signal.ncols();
    let mut sigma_e = DVector::zeros(q);
    for (j, col) in signal.column_iter().enumerate() {
        let sd = sample_sd(col.iter().copied());
        if !(sd > 0.0) {
            return Err(FavarError::ZeroSignal(j));
        }
        sigma_e[j] = sd / snr;
    }
    let mut y = signal;
    for j in 0..q {
        for t in 0..y.nrows() {
            y[(t, j)] += sigma_e[j] * sampler.draw(rng);
        }
    }
    Ok((TimeSeriesPanel::with_prefix(y, "Y")?, sigma_e))
}

pub(crate) fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Parameters plus one realization of `(F, X, Y)`.
#[derive(Debug, Clone)]
pub struct SimulatedSystem {
    pub params: FavarParams,
    pub f: TimeSeriesPanel,
    pub x: TimeSeriesPanel,
    pub y: TimeSeriesPanel,
}

/// Generates parameters and `cfg.n + extra` samples; the trailing `extra`
/// rows serve as forecast targets.
pub fn simulate_system(cfg: &SimConfig, extra: usize) -> Result<SimulatedSystem> {
    cfg.validate()?;
    let mut params = gen_params_with(cfg, &mut stream_rng(cfg.seed, STREAM_PARAMS))?;
    let (f, x) = gen_var_path_with(
        &params,
        cfg.n + extra,
        cfg.noise,
        cfg.burn_in,
        &mut stream_rng(cfg.seed, STREAM_PATH),
    )?;
    let (y, sigma_e) = gen_calibration_with(
        &f,
        &x,
        &params.loading,
        &params.coeff,
        cfg.snr,
        cfg.calibration_noise,
        &mut stream_rng(cfg.seed, STREAM_CALIBRATION),
    )?;
    params.sigma_e = sigma_e;
    Ok(SimulatedSystem { params, f, x, y })
}

/// IID Gaussian draws of `(X_t, F_t)` with unit variances and a common
/// off-diagonal covariance `rho`.
pub fn gen_equicorrelated<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dim: usize,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let mut cov = DMatrix::from_element(dim, dim, rho);
    cov.fill_diagonal(1.0);
    let chol = cov
        .cholesky()
        .ok_or_else(|| FavarError::InvalidArgument(format!("covariance with rho={rho} is not positive definite")))?;
    let z = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(z * chol.l().transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn moments(v: &[f64]) -> (f64, f64, f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    fn scalar_params(a: &[f64], sigma: f64) -> FavarParams {
        FavarParams::new(
            1,
            1,
            a.iter()
                .map(|&v| DMatrix::from_row_slice(2, 2, &[v, 0.0, 0.0, 0.0]))
                .collect(),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, sigma),
            DVector::from_element(1, sigma),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn rescale_single_lag_is_linear() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let scaled = rescale_transitions(std::slice::from_ref(&a), 0.5).unwrap();
        assert_abs_diff_eq!(scaled[0], a * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rescale_two_lags_hits_target() {
        // x^2 - 0.5x - 3.0 has roots 2.0 and -1.5: raw radius 2
        let a1 = DMatrix::from_element(1, 1, 0.5);
        let a2 = DMatrix::from_element(1, 1, 3.0);
        let raw = build_companion(&[a1.clone(), a2.clone()]).unwrap();
        assert_abs_diff_eq!(raw.spectral_radius().unwrap(), 2.0, epsilon = 1e-10);
        let scaled = rescale_transitions(&[a1, a2], 0.8).unwrap();
        assert_abs_diff_eq!(scaled[0][(0, 0)], 0.5 * 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled[1][(0, 0)], 3.0 * 0.16, epsilon = 1e-12);
        let rho = build_companion(&scaled).unwrap().spectral_radius().unwrap();
        assert_abs_diff_eq!(rho, 0.8, epsilon = 1e-6);
    }

    #[test]
    fn zero_transitions_are_degenerate() {
        let err = rescale_transitions(&[DMatrix::zeros(2, 2)], 0.5);
        assert!(matches!(err, Err(FavarError::DegenerateDraw(_))));
    }

    #[test]
    fn generated_params_meet_invariants() {
        for id in ["A1", "B1", "B3"] {
            let cfg = SimConfig {
                seed: 11,
                ..SimConfig::setting(id).unwrap()
            };
            let params = gen_params(&cfg).unwrap();
            assert!(params.is_ir_normalized());
            assert_abs_diff_eq!(params.spectral_radius().unwrap(), cfg.target_rho, epsilon = 1e-6);
            assert_eq!(params.d(), cfg.d());
            let bottom = params.loading.rows(cfg.p1, cfg.q - cfg.p1);
            assert!(bottom.iter().all(|v| v.abs() >= 1.2 && v.abs() <= 1.5));
        }
    }

    #[test]
    fn a1_transition_nonzero_count_is_binomial() {
        // 55^2 entries, each nonzero with probability 3/55: mean 165, sd ~12.6
        let cfg = SimConfig::setting("A1").unwrap();
        let mut total = 0usize;
        let reps = 20;
        for seed in 0..reps {
            let params = gen_params(&SimConfig { seed, ..cfg.clone() }).unwrap();
            let nnz = params.transitions[0].iter().filter(|v| **v != 0.0).count();
            assert!((165 - 60..=165 + 60).contains(&nnz), "nnz = {nnz}");
            total += nnz;
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 165.0).abs() < 4.0 * 12.6 / (reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn white_noise_path_has_no_autocorrelation() {
        let params = FavarParams::new(
            1,
            2,
            vec![DMatrix::zeros(3, 3)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, 1.0),
            DVector::from_element(2, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let n = 4000;
        let (_, x) = gen_var_path(&params, n, NoiseFamily::Gaussian, 10, 5).unwrap();
        for col in x.values().column_iter() {
            let v: Vec<f64> = col.iter().copied().collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let c0: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
            let c1: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
            assert!((c1 / c0).abs() < 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn ar1_stationary_variance() {
        // Var = sigma^2 / (1 - a^2) = 1 / 0.19
        let params = scalar_params(&[0.9], 1.0);
        let (f, _) = gen_var_path(&params, 5000, NoiseFamily::Gaussian, 500, 21).unwrap();
        let v: Vec<f64> = f.values().iter().copied().collect();
        let (_, var, _, _) = moments(&v);
        let oracle = 1.0 / (1.0 - 0.81);
        assert!((var - oracle).abs() / oracle < 0.15, "{var} vs {oracle}");
    }

    #[test]
    fn heavy_tailed_innovations() {
        let mut rng = stream_rng(3, 0);
        let t4 = NoiseFamily::StudentT { nu: 4.0 }.sampler().unwrap();
        let draws: Vec<f64> = (0..50_000).map(|_| t4.draw(&mut rng)).collect();
        let (mean, var, _, kurt) = moments(&draws);
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.15);
        assert!(kurt > 1.0, "excess kurtosis {kurt}");

        for seed in 0..5 {
            let mut rng = stream_rng(seed, 0);
            let se = NoiseFamily::SubExponential.sampler().unwrap();
            let draws: Vec<f64> = (0..20_000).map(|_| se.draw(&mut rng)).collect();
            let (mean, var, skew, _) = moments(&draws);
            assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.1);
            assert!(skew > 1.0, "skewness {skew}");
        }
        assert!(NoiseFamily::StudentT { nu: 2.0 }.sampler().is_err());
    }

    #[test]
    fn calibration_snr_is_exact() {
        let cfg = SimConfig {
            seed: 9,
            ..SimConfig::setting("A1").unwrap()
        };
        let sys = simulate_system(&cfg, 0).unwrap();
        let signal = sys.f.values() * sys.params.loading.transpose()
            + sys.x.values() * sys.params.coeff.transpose();
        let mean_snr = signal
            .column_iter()
            .zip(sys.params.sigma_e.iter())
            .map(|(c, s)| sample_sd(c.iter().copied()) / s)
            .sum::<f64>()
            / cfg.q as f64;
        assert!((1.485..=1.515).contains(&mean_snr), "{mean_snr}");
    }

    #[test]
    fn calibration_limits() {
        let params = scalar_params(&[0.5], 1.0);
        let (f, x) = gen_var_path(&params, 50, NoiseFamily::Gaussian, 10, 1).unwrap();
        let loading = DMatrix::from_element(2, 1, 1.0);
        let coeff = DMatrix::from_element(2, 1, 0.5);
        let (y, _) = gen_calibration(&f, &x, &loading, &coeff, 1e12, NoiseFamily::Gaussian, 2).unwrap();
        let signal = f.values() * loading.transpose() + x.values() * coeff.transpose();
        assert!((y.values() - signal).amax() < 1e-9);

        let err = gen_calibration(
            &f,
            &x,
            &DMatrix::zeros(2, 1),
            &DMatrix::zeros(2, 1),
            1.5,
            NoiseFamily::Gaussian,
            2,
        );
        assert!(matches!(err, Err(FavarError::ZeroSignal(0))));
    }

    #[test]
    fn unstable_params_rejected() {
        let params = scalar_params(&[1.2], 1.0);
        assert!(matches!(
            gen_var_path(&params, 10, NoiseFamily::Gaussian, 0, 0),
            Err(FavarError::Unstable(_))
        ));
    }

    #[test]
    fn same_seed_same_system() {
        let cfg = SimConfig {
            seed: 77,
            ..SimConfig::setting("B3").unwrap()
        };
        let a = simulate_system(&cfg, 2).unwrap();
        let b = simulate_system(&cfg, 2).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.params, b.params);
        let c = simulate_system(&SimConfig { seed: 78, ..cfg }, 2).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn settings_table() {
        for id in ["A1", "A2", "A3", "A4", "B1", "B2", "B3", "C1", "C2", "C3", "C4"] {
            SimConfig::setting(id).unwrap().validate().unwrap();
        }
        assert_eq!(SimConfig::setting("C4").unwrap().n, 500);
        assert_eq!(SimConfig::setting("b2").unwrap().d(), 4);
        assert!(SimConfig::setting("Z9").is_err());
    }
}
