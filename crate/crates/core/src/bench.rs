//! Monte-Carlo driver over the synthetic settings, and the initializer
//! sensitivity study for dense versus sparse `Γ`.
//!
//! Replication `k` draws everything from `mix_seed(seed, k)`, so adding
//! replications never changes earlier ones. Replications run in parallel and
//! are aggregated in index order, which keeps reports bit-identical across
//! thread counts.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FavarError, Result};
use crate::estimate::{stage1_fit, Stage1Config};
use crate::forecast::{forecast_benchmark, forecast_metrics, ForecastMetrics};
use crate::metrics::{
    mean_sd, observed_block, pad_columns, pad_factor_block, rel_frob_err, support_metrics,
    SupportMetrics,
};
use crate::model::center_matrix;
use crate::pipeline::{fit_favar, FitOptions};
use crate::select::SelectionGrid;
use crate::simulate::{
    gen_equicorrelated, mix_seed, signed_uniform, simulate_system, sparse_block, stream_rng,
    SimConfig,
};

pub const DEFAULT_REPLICATIONS: usize = 50;
pub const FAST_REPLICATIONS: usize = 10;
/// Relative slack allowed when checking that an objective trace never rises.
pub const TRACE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    /// Setting id or a free label for custom configurations.
    pub label: String,
    pub sim: SimConfig,
    pub replications: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub horizons: Vec<usize>,
}

impl BenchSpec {
    /// A preset setting with the default grids; horizons 1 for one-lag systems
    /// and 1, 2 otherwise.
    pub fn preset(id: &str, replications: usize, seed: u64) -> Result<Self> {
        let sim = SimConfig::setting(id)?;
        Ok(Self::custom(id.to_ascii_uppercase(), sim, replications, seed))
    }

    pub fn custom(label: String, sim: SimConfig, replications: usize, seed: u64) -> Self {
        let d = sim.d();
        Self {
            label,
            fit: FitOptions {
                d,
                grid: SelectionGrid::default(),
                ..FitOptions::default()
            },
            horizons: if d == 1 { vec![1] } else { vec![1, 2] },
            sim,
            replications,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(FavarError::InvalidArgument("replications must be >= 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(FavarError::InvalidArgument("horizons must be non-empty and >= 1".into()));
        }
        self.sim.validate()
    }
}

/// Support and error of one transition block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockMetrics {
    pub sen: f64,
    pub spc: f64,
    pub err: f64,
}

impl BlockMetrics {
    fn of(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Self> {
        let s: SupportMetrics = support_metrics(estimate, truth, 0.0)?;
        Ok(Self {
            sen: s.sen,
            spc: s.spc,
            err: rel_frob_err(estimate, truth)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagMetrics {
    pub lag: usize,
    pub full: BlockMetrics,
    /// Observed-to-observed block.
    pub observed: BlockMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub metrics: ForecastMetrics,
}

/// Everything measured on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub rank: usize,
    pub lambda_gamma: f64,
    pub lambda_a: f64,
    pub err_theta: f64,
    pub err_f: f64,
    pub err_lambda: f64,
    pub gamma: BlockMetrics,
    pub lags: Vec<LagMetrics>,
    pub forecasts: Vec<HorizonMetrics>,
    pub stage1_iterations: usize,
    /// Lattice points dropped for not converging.
    pub excluded_points: usize,
    /// Whether the selected fit's objective trace never rose.
    pub trace_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub spec: BenchSpec,
    pub outcomes: Vec<RepOutcome>,
    pub failures: Vec<RepFailure>,
}

fn trace_is_monotone(trace: &[f64]) -> bool {
    trace
        .windows(2)
        .all(|w| w[1] <= w[0] + TRACE_SLACK * w[0].abs().max(1.0))
}

/// One replication: simulate, fit both stages, forecast and score.
pub fn run_replication(spec: &BenchSpec, rep: usize) -> Result<RepOutcome> {
    let mut cfg = spec.sim.clone();
    cfg.seed = mix_seed(spec.seed, rep as u64);
    let max_h = spec.horizons.iter().copied().max().unwrap_or(1);
    let sys = simulate_system(&cfg, max_h)?;
    let n = cfg.n;
    let x = sys.x.values().rows(0, n).into_owned();
    let y = sys.y.values().rows(0, n).into_owned();
    let (f_true, _) = center_matrix(&sys.f.values().rows(0, n).into_owned());
    let params = &sys.params;

    let fit = fit_favar(&x, &y, &spec.fit)?;
    let excluded_points = fit.pic_scores.iter().filter(|r| !r.converged).count();

    let theta_true = &f_true * params.loading.transpose();
    let err_theta = rel_frob_err(&fit.theta_hat, &theta_true)?;
    let (p1, r) = (params.p1, fit.p1());
    let k = p1.max(r);
    let err_f = rel_frob_err(&pad_columns(&fit.f_hat, k), &pad_columns(&f_true, k))?;
    let err_lambda = rel_frob_err(&pad_columns(&fit.lambda_hat, k), &pad_columns(&params.loading, k))?;
    let gamma = BlockMetrics::of(&fit.gamma_hat, &params.coeff)?;

    let lags = fit
        .a_hat
        .iter()
        .zip(&params.transitions)
        .enumerate()
        .map(|(i, (est, truth))| {
            let est = pad_factor_block(est, r, k)?;
            let truth = pad_factor_block(truth, p1, k)?;
            Ok(LagMetrics {
                lag: i + 1,
                full: BlockMetrics::of(&est, &truth)?,
                observed: BlockMetrics::of(&observed_block(&est, k), &observed_block(&truth, k))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let forecasts = spec
        .horizons
        .iter()
        .map(|&h| {
            let x_hat = fit.forecast(h)?;
            let x_bench = forecast_benchmark(&x, h)?;
            let x_true: DVector<f64> = sys.x.values().row(n - 1 + h).transpose();
            Ok(HorizonMetrics {
                horizon: h,
                metrics: forecast_metrics(&x_hat, &x_bench, &x_true)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RepOutcome {
        rep,
        seed: cfg.seed,
        rank: fit.rank,
        lambda_gamma: fit.lambda_gamma,
        lambda_a: fit.lambda_a,
        err_theta,
        err_f,
        err_lambda,
        gamma,
        lags,
        forecasts,
        stage1_iterations: fit.stage1_iterations,
        excluded_points,
        trace_monotone: trace_is_monotone(&fit.objective_trace),
    })
}

/// Runs every replication of `spec` on the current rayon pool. Replications
/// that fail are recorded with their error and left out of the aggregates.
pub fn run_setting(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let results: Vec<Result<RepOutcome>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, rep))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(RepFailure {
                rep,
                seed: mix_seed(spec.seed, rep as u64),
                message: e.to_string(),
            }),
        }
    }
    Ok(BenchReport {
        spec: spec.clone(),
        outcomes,
        failures,
    })
}

/// Mean and standard deviation across successful replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self { mean, sd }
    }
}

impl BenchReport {
    fn summary(&self, f: impl Fn(&RepOutcome) -> f64) -> Summary {
        Summary::of(&self.outcomes.iter().map(f).collect::<Vec<_>>())
    }

    pub fn rank(&self) -> Summary {
        self.summary(|o| o.rank as f64)
    }

    pub fn err_theta(&self) -> Summary {
        self.summary(|o| o.err_theta)
    }

    pub fn err_f(&self) -> Summary {
        self.summary(|o| o.err_f)
    }

    pub fn err_lambda(&self) -> Summary {
        self.summary(|o| o.err_lambda)
    }

    pub fn gamma(&self) -> [Summary; 3] {
        [
            self.summary(|o| o.gamma.sen),
            self.summary(|o| o.gamma.spc),
            self.summary(|o| o.gamma.err),
        ]
    }

    /// `[full sen, spc, err, observed sen, spc, err]` for lag `lag` (1-based).
    pub fn lag(&self, lag: usize) -> [Summary; 6] {
        let pick = |g: fn(&LagMetrics) -> f64| self.summary(move |o| g(&o.lags[lag - 1]));
        [
            pick(|l| l.full.sen),
            pick(|l| l.full.spc),
            pick(|l| l.full.err),
            pick(|l| l.observed.sen),
            pick(|l| l.observed.spc),
            pick(|l| l.observed.err),
        ]
    }

    pub fn forecast(&self, horizon: usize) -> Option<[Summary; 2]> {
        let idx = self.spec.horizons.iter().position(|&h| h == horizon)?;
        Some([
            self.summary(|o| o.forecasts[idx].metrics.rel_err),
            self.summary(|o| o.forecasts[idx].metrics.rel_err_ratio),
        ])
    }

    /// Share of replications whose forecast beats the benchmark at `horizon`.
    pub fn ratio_below_one(&self, horizon: usize) -> Option<f64> {
        let idx = self.spec.horizons.iter().position(|&h| h == horizon)?;
        let k = self.outcomes.len();
        let wins = self.outcomes.iter().filter(|o| o.forecasts[idx].metrics.rel_err_ratio < 1.0).count();
        Some(wins as f64 / k as f64)
    }

    pub fn rank_share(&self, r: usize) -> f64 {
        self.outcomes.iter().filter(|o| o.rank == r).count() as f64 / self.outcomes.len() as f64
    }

    pub fn all_traces_monotone(&self) -> bool {
        self.outcomes.iter().all(|o| o.trace_monotone)
    }

    /// Writes the aggregate tables, per-replication records, failures and a
    /// manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let label = &self.spec.label;
        let k = self.outcomes.len().to_string();

        let mut t2 = csv::Writer::from_path(dir.join("calibration.csv"))?;
        t2.write_record(["setting", "reps", "statistic", "r", "err_theta", "err_f", "err_lambda", "sen_gamma", "spc_gamma", "err_gamma"])?;
        let g = self.gamma();
        let cols2 = [self.rank(), self.err_theta(), self.err_f(), self.err_lambda(), g[0], g[1], g[2]];
        write_stat_rows(&mut t2, &[label, &k], &cols2)?;
        t2.flush()?;

        let mut t3 = csv::Writer::from_path(dir.join("transition.csv"))?;
        t3.write_record(["setting", "reps", "lag", "statistic", "sen_a", "spc_a", "err_a", "sen_a22", "spc_a22", "err_a22"])?;
        if !self.outcomes.is_empty() {
            for lag in 1..=self.spec.sim.d() {
                write_stat_rows(&mut t3, &[label, &k, &lag.to_string()], &self.lag(lag))?;
            }
        }
        t3.flush()?;

        let mut t4 = csv::Writer::from_path(dir.join("forecast.csv"))?;
        t4.write_record(["setting", "reps", "horizon", "statistic", "rel_err", "rel_err_ratio"])?;
        if !self.outcomes.is_empty() {
            for &h in &self.spec.horizons {
                let s = self.forecast(h).expect("horizon in spec");
                write_stat_rows(&mut t4, &[label, &k, &h.to_string()], &s)?;
            }
        }
        t4.flush()?;

        let mut reps = csv::Writer::from_path(dir.join("replications.csv"))?;
        reps.write_record([
            "rep", "seed", "rank", "lambda_gamma", "lambda_a", "err_theta", "err_f", "err_lambda",
            "sen_gamma", "spc_gamma", "err_gamma", "stage1_iterations", "excluded_points", "trace_monotone",
        ])?;
        for o in &self.outcomes {
            reps.write_record([
                o.rep.to_string(),
                o.seed.to_string(),
                o.rank.to_string(),
                fmt(o.lambda_gamma),
                fmt(o.lambda_a),
                fmt(o.err_theta),
                fmt(o.err_f),
                fmt(o.err_lambda),
                fmt(o.gamma.sen),
                fmt(o.gamma.spc),
                fmt(o.gamma.err),
                o.stage1_iterations.to_string(),
                o.excluded_points.to_string(),
                o.trace_monotone.to_string(),
            ])?;
        }
        reps.flush()?;

        let mut lags = csv::Writer::from_path(dir.join("replication_lags.csv"))?;
        lags.write_record(["rep", "lag", "sen_a", "spc_a", "err_a", "sen_a22", "spc_a22", "err_a22"])?;
        for o in &self.outcomes {
            for l in &o.lags {
                lags.write_record([
                    o.rep.to_string(),
                    l.lag.to_string(),
                    fmt(l.full.sen),
                    fmt(l.full.spc),
                    fmt(l.full.err),
                    fmt(l.observed.sen),
                    fmt(l.observed.spc),
                    fmt(l.observed.err),
                ])?;
            }
        }
        lags.flush()?;

        let mut fc = csv::Writer::from_path(dir.join("replication_forecasts.csv"))?;
        fc.write_record(["replication", "horizon", "rel_err", "rel_err_ratio", "excluded"])?;
        for o in &self.outcomes {
            for h in &o.forecasts {
                fc.write_record([
                    o.rep.to_string(),
                    h.horizon.to_string(),
                    fmt(h.metrics.rel_err),
                    fmt(h.metrics.rel_err_ratio),
                    h.metrics.excluded.to_string(),
                ])?;
            }
        }
        fc.flush()?;

        let mut fail = csv::Writer::from_path(dir.join("failures.csv"))?;
        fail.write_record(["rep", "seed", "message"])?;
        for f in &self.failures {
            fail.write_record([f.rep.to_string(), f.seed.to_string(), f.message.clone()])?;
        }
        fail.flush()?;

        fs::write(dir.join("manifest.toml"), self.manifest()?)?;
        Ok(())
    }

    /// Run description: crate version, seed, replication counts, grids and the
    /// full simulation recipe.
    pub fn manifest(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            crate_name: &'static str,
            crate_version: &'static str,
            setting: &'a str,
            seed: u64,
            replications: usize,
            succeeded: usize,
            failed: usize,
            excluded_lattice_points: usize,
            horizons: &'a [usize],
            lag_order: usize,
            pic_penalty: crate::select::PicPenalty,
            stage1_tol: f64,
            stage1_max_iter: usize,
            accelerate: bool,
            grid: &'a SelectionGrid,
            simulation: &'a SimConfig,
        }
        let s = &self.spec;
        let m = Manifest {
            crate_name: env!("CARGO_PKG_NAME"),
            crate_version: env!("CARGO_PKG_VERSION"),
            setting: &s.label,
            seed: s.seed,
            replications: s.replications,
            succeeded: self.outcomes.len(),
            failed: self.failures.len(),
            excluded_lattice_points: self.outcomes.iter().map(|o| o.excluded_points).sum(),
            horizons: &s.horizons,
            lag_order: s.fit.d,
            pic_penalty: s.fit.stage1.penalty,
            stage1_tol: s.fit.stage1.tol,
            stage1_max_iter: s.fit.stage1.max_iter,
            accelerate: s.fit.stage1.accelerate,
            grid: &s.fit.grid,
            simulation: &s.sim,
        };
        toml::to_string(&m).map_err(|e| FavarError::Config(e.to_string()))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

fn write_stat_rows<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    keys: &[&str],
    cols: &[Summary],
) -> Result<()> {
    for (stat, pick) in [("mean", 0usize), ("sd", 1)] {
        let mut rec: Vec<String> = keys.iter().map(|s| s.to_string()).collect();
        rec.push(stat.into());
        rec.extend(cols.iter().map(|s| fmt(if pick == 0 { s.mean } else { s.sd })));
        w.write_record(&rec)?;
    }
    Ok(())
}

/// Recipe for the initializer sensitivity study: iid equicorrelated Gaussian
/// `(X_t, F_t)`, unit-variance calibration noise, an alternative model shifted
/// by a constant `Q2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitStudySpec {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
    pub correlation: f64,
    pub sigma_e: f64,
    /// Every entry of `Q2`.
    pub q2_value: f64,
    /// Scale of the Gaussian perturbation of the true hyperplane.
    pub perturbation: f64,
    /// Penalty as a fraction of the data's `λ_max` with a dense `Γ`. Kept
    /// small: any real penalty drags a dense `Γ` along the equivalence class.
    pub lambda_ratio_dense: f64,
    /// Same for the sparse regime.
    pub lambda_ratio_sparse: f64,
    /// Entry value of the constant initializer.
    pub constant_init: f64,
    /// Density of `Γ` in the sparse regime.
    pub sparse_density: f64,
    pub magnitude: (f64, f64),
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for InitStudySpec {
    fn default() -> Self {
        Self {
            n: 200,
            p1: 5,
            p2: 50,
            q: 100,
            correlation: 0.25,
            sigma_e: 1.0,
            q2_value: 5.0,
            perturbation: 0.1,
            lambda_ratio_dense: 1e-4,
            lambda_ratio_sparse: 1e-2,
            constant_init: 20.0,
            sparse_density: 0.1,
            magnitude: (1.2, 1.5),
            tol: crate::estimate::DEFAULT_STAGE1_TOL,
            max_iter: crate::estimate::DEFAULT_STAGE1_MAX_ITER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRegime {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    Truth,
    Zero,
    Perturbed,
    Equivalent,
    Constant,
}

impl Initializer {
    /// The dense regime starts one run from the shifted equivalent model, the
    /// sparse regime from a constant matrix.
    pub fn for_regime(regime: GammaRegime) -> [Initializer; 4] {
        let last = match regime {
            GammaRegime::Dense => Self::Equivalent,
            GammaRegime::Sparse => Self::Constant,
        };
        [Self::Truth, Self::Zero, Self::Perturbed, last]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Truth => "truth",
            Self::Zero => "zero",
            Self::Perturbed => "perturbed",
            Self::Equivalent => "equivalent",
            Self::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitializerOutcome {
    pub regime: GammaRegime,
    pub initializer: Initializer,
    /// Relative error to the data-generating hyperplane.
    pub rel_err: f64,
    /// Relative error to the hyperplane of the shifted equivalent model.
    pub rel_err_equivalent: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
}

/// Runs plain (unaccelerated) Stage I at rank `p1` from each initializer, for
/// a dense and a sparse `Γ`; dense rows come first.
pub fn run_init_study(spec: &InitStudySpec) -> Result<Vec<InitializerOutcome>> {
    let mut out = Vec::new();
    for regime in [GammaRegime::Dense, GammaRegime::Sparse] {
        let InitStudyData { x, y, theta_true, theta_check } = init_study_data(spec, regime)?;
        let ratio = match regime {
            GammaRegime::Dense => spec.lambda_ratio_dense,
            GammaRegime::Sparse => spec.lambda_ratio_sparse,
        };
        let lambda = ratio * crate::solvers::lambda_max(&x, &y);
        let mut rng = stream_rng(spec.seed, 20 + regime as u64);
        let z = DMatrix::from_fn(spec.n, spec.q, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let rows: Vec<Result<InitializerOutcome>> = Initializer::for_regime(regime)
            .par_iter()
            .map(|&init| {
                let theta0 = match init {
                    Initializer::Truth => theta_true.clone(),
                    Initializer::Zero => DMatrix::zeros(spec.n, spec.q),
                    Initializer::Perturbed => &theta_true + &z * spec.perturbation,
                    Initializer::Equivalent => theta_check.clone(),
                    Initializer::Constant => DMatrix::from_element(spec.n, spec.q, spec.constant_init),
                };
                let mut cfg = Stage1Config::new(lambda, spec.p1);
                cfg.tol = spec.tol;
                cfg.max_iter = spec.max_iter;
                cfg.theta_init = Some(theta0);
                let fit = stage1_fit(&x, &y, &cfg)?;
                Ok(InitializerOutcome {
                    regime,
                    initializer: init,
                    rel_err: rel_frob_err(&fit.theta_hat, &theta_true)?,
                    rel_err_equivalent: rel_frob_err(&fit.theta_hat, &theta_check)?,
                    converged: fit.converged,
                    iterations: fit.iterations,
                    final_objective: fit.objective(),
                })
            })
            .collect();
        for r in rows {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Centered panels of one regime with the true and the equivalent hyperplane.
#[derive(Debug, Clone)]
pub struct InitStudyData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub theta_true: DMatrix<f64>,
    /// `Θ̌`, fitting `Y` equally well with a shifted `Γ`.
    pub theta_check: DMatrix<f64>,
}

pub fn init_study_data(spec: &InitStudySpec, regime: GammaRegime) -> Result<InitStudyData> {
    let (n, p1, p2, q) = (spec.n, spec.p1, spec.p2, spec.q);
    let mut rng = stream_rng(spec.seed, 10 + regime as u64);
    let joint = gen_equicorrelated(&mut rng, n, p2 + p1, spec.correlation)?;
    let (joint, _) = center_matrix(&joint);
    let x = joint.columns(0, p2).into_owned();
    let f = joint.columns(p2, p1).into_owned();
    let mut loading = DMatrix::zeros(q, p1);
    for i in 0..p1 {
        loading[(i, i)] = 1.0;
    }
    for j in 0..p1 {
        for i in p1..q {
            loading[(i, j)] = signed_uniform(&mut rng, spec.magnitude);
        }
    }
    let mut gamma = DMatrix::zeros(q, p2);
    let density = match regime {
        GammaRegime::Dense => 1.0,
        GammaRegime::Sparse => spec.sparse_density,
    };
    sparse_block(&mut rng, &mut gamma, (0, 0), (q, p2), density, spec.magnitude);
    let e = DMatrix::from_fn(n, q, |_, _| -> f64 { StandardNormal.sample(&mut rng) }) * spec.sigma_e;
    let theta_true = &f * loading.transpose();
    let y = center_matrix(&(&theta_true + &x * gamma.transpose() + e)).0;
    // F̌ = F - X Q2' with every entry of Q2 equal to q2_value
    let q2 = DMatrix::from_element(p1, p2, spec.q2_value);
    let f_check = &f - &x * q2.transpose();
    let theta_check = f_check * loading.transpose();
    Ok(InitStudyData { x, y, theta_true, theta_check })
}

pub fn write_init_study(rows: &[InitializerOutcome], dir: &Path, spec: &InitStudySpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("initializers.csv"))?;
    w.write_record(["regime", "initializer", "rel_err", "rel_err_equivalent", "converged", "iterations", "final_objective"])?;
    for r in rows {
        w.write_record([
            match r.regime {
                GammaRegime::Dense => "dense".to_string(),
                GammaRegime::Sparse => "sparse".to_string(),
            },
            r.initializer.name().to_string(),
            fmt(r.rel_err),
            fmt(r.rel_err_equivalent),
            r.converged.to_string(),
            r.iterations.to_string(),
            fmt(r.final_objective),
        ])?;
    }
    w.flush()?;
    let manifest = toml::to_string(spec).map_err(|e| FavarError::Config(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::LambdaGrid;

    fn tiny_spec(reps: usize) -> BenchSpec {
        let mut sim = SimConfig::setting("A1").unwrap();
        sim.q = 24;
        sim.p1 = 2;
        sim.p2 = 6;
        sim.n = 80;
        sim.gamma_density = 0.25;
        sim.lag_densities = vec![crate::simulate::BlockDensity::uniform(0.25)];
        let mut spec = BenchSpec::custom("tiny".into(), sim, reps, 3);
        spec.fit.grid = SelectionGrid {
            lambda_gamma: LambdaGrid::LogSpaced { points: 5, min_ratio: 0.05 },
            ranks: Some(vec![1, 2, 3]),
            lambda_a: LambdaGrid::LogSpaced { points: 5, min_ratio: 0.05 },
        };
        spec
    }

    #[test]
    fn single_replication_is_deterministic() {
        let spec = tiny_spec(1);
        let a = run_setting(&spec).unwrap();
        let b = run_setting(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.outcomes.len() + a.failures.len(), 1);
    }

    #[test]
    fn replications_do_not_depend_on_count() {
        let one = run_setting(&tiny_spec(1)).unwrap();
        let two = run_setting(&tiny_spec(2)).unwrap();
        assert_eq!(one.outcomes[0], two.outcomes[0]);
    }

    #[test]
    fn report_files_are_written() {
        let report = run_setting(&tiny_spec(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        for f in ["calibration.csv", "transition.csv", "forecast.csv", "replications.csv", "failures.csv", "manifest.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("setting = \"tiny\""));
        assert!(report.all_traces_monotone());
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(run_setting(&tiny_spec(0)).is_err());
    }

    #[test]
    fn equivalent_model_reproduces_the_data_fit() {
        // Θ̌ + X Γ̌' = Θ* + X Γ'
        let spec = InitStudySpec {
            n: 30,
            p1: 2,
            p2: 4,
            q: 8,
            ..InitStudySpec::default()
        };
        let data = init_study_data(&spec, GammaRegime::Dense).unwrap();
        let shift = &data.theta_true - &data.theta_check;
        // Θ* - Θ̌ = X Q2' Λ' has rank at most p1
        assert!(crate::solvers::numerical_rank(&shift, 1e-8) <= spec.p1);
        assert!(shift.norm() > 0.0);
        assert_eq!(data.x.ncols(), spec.p2);
    }
}
