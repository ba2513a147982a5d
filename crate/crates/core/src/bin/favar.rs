use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use favar::bench::{run_init_study, run_setting, write_init_study, InitStudySpec, BenchSpec, DEFAULT_REPLICATIONS, FAST_REPLICATIONS};
use favar::io::{
    export_network, load_fit, monthly_dates, parse_date, save_fit, write_matrix, write_network, write_panel_csv,
    DatedPanel, RunConfig,
};
use favar::pipeline::{fit_favar, FavarFit};
use favar::select::{write_bic_table, write_pic_table};
use favar::simulate::{simulate_system, SimConfig};
use favar::{FavarError, Result};

/// Sparse factor-augmented VAR: simulate, estimate, select, forecast, benchmark.
#[derive(Parser)]
#[command(name = "favar", version)]
struct Cli {
    /// Worker threads for estimation and benchmarks (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic system: dated panels x.csv, y.csv, f.csv and its parameters.
    Simulate {
        /// Preset id (A1..A4, B1..B3, C1..C4).
        #[arg(long, default_value = "A1")]
        setting: String,
        /// TOML simulation recipe; overrides --setting.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra trailing rows beyond the configured sample size.
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[arg(long, default_value = "favar-sim")]
        out: PathBuf,
    },
    /// Two-stage fit of provided panels; writes one fit bundle per period.
    Fit(DataArgs),
    /// Grid search only; writes the PIC and BIC score tables per period.
    Select(DataArgs),
    /// h-step forecasts from a saved fit bundle.
    Forecast {
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo replications of a preset setting.
    Bench {
        #[arg(long)]
        setting: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 10 replications and looser tolerances.
        #[arg(long)]
        fast: bool,
        /// TOML simulation recipe replacing the preset's parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "favar-bench")]
        out: PathBuf,
    },
    /// Initializer sensitivity study of the calibration fit.
    InitStudy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dense-regime penalty as a fraction of the data's lambda_max.
        #[arg(long)]
        lambda_ratio_dense: Option<f64>,
        /// Sparse-regime penalty as a fraction of the data's lambda_max.
        #[arg(long)]
        lambda_ratio_sparse: Option<f64>,
        #[arg(long, default_value = "favar-init-study")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observed panel CSV; used when no config is given.
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    /// Calibration panel CSV; used when no config is given.
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// VAR lag order when no config is given.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Output directory; overrides the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for symmetry; estimation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl DataArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.x, &self.y) {
            (Some(path), _, _) => RunConfig::load(path)?,
            (None, Some(x), Some(y)) => {
                let text = format!(
                    "version = {}\n[data]\nx_panel = {:?}\ny_panel = {:?}\n[estimation]\nd = {}\n",
                    favar::io::CONFIG_VERSION,
                    x.display().to_string(),
                    y.display().to_string(),
                    self.d
                );
                RunConfig::parse(&text)?
            }
            _ => return Err(FavarError::Config("give --config FILE or both --x and --y".into())),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

struct Period {
    name: String,
    x: DatedPanel,
    y: DatedPanel,
}

fn periods(cfg: &RunConfig) -> Result<Vec<Period>> {
    cfg.windows()
        .into_iter()
        .map(|(name, w)| {
            let (x, y) = cfg.data.load(w.as_ref())?;
            Ok(Period { name, x, y })
        })
        .collect()
}

fn fit_period(cfg: &RunConfig, p: &Period) -> Result<FavarFit> {
    eprintln!(
        "{}: n={} p2={} q={} ({} .. {})",
        p.name,
        p.x.panel.n(),
        p.x.panel.m(),
        p.y.panel.m(),
        p.x.dates[0],
        p.x.dates[p.x.dates.len() - 1]
    );
    fit_favar(p.x.panel.values(), p.y.panel.values(), &cfg.fit_options())
}

fn write_scores(fit: &FavarFit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_pic_table(&fit.pic_scores, fs::File::create(dir.join("pic.csv"))?)?;
    write_bic_table(&fit.bic_scores, fs::File::create(dir.join("bic.csv"))?)?;
    Ok(())
}

fn cmd_fit(args: &DataArgs, scores_only: bool) -> Result<()> {
    let cfg = args.config()?;
    for p in periods(&cfg)? {
        let fit = fit_period(&cfg, &p)?;
        let dir = cfg.output.dir.join(&p.name);
        write_scores(&fit, &dir)?;
        if !scores_only {
            save_fit(&dir, &fit, p.x.panel.labels(), p.y.panel.labels())?;
            let mut labels: Vec<String> = (1..=fit.p1()).map(|k| format!("F{k}")).collect();
            labels.extend(p.x.panel.labels().iter().cloned());
            for (k, a) in fit.a_hat.iter().enumerate() {
                let net = export_network(a, &labels, cfg.output.network_threshold)?;
                write_network(&net, &dir, &format!("lag{}_", k + 1))?;
            }
        }
        println!(
            "{}: rank {} lambda_gamma {:.6e} lambda_a {:.6e} -> {}",
            p.name,
            fit.rank,
            fit.lambda_gamma,
            fit.lambda_a,
            dir.display()
        );
    }
    Ok(())
}

fn cmd_forecast(dir: &Path, horizon: usize, out: Option<&Path>) -> Result<()> {
    let (fit, meta) = load_fit(dir)?;
    let mut w: csv::Writer<Box<dyn std::io::Write>> = csv::Writer::from_writer(match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    });
    let mut header = vec!["horizon".to_string()];
    header.extend(meta.x_labels.iter().cloned());
    w.write_record(&header)?;
    for h in 1..=horizon {
        let fc = fit.forecast(h)?;
        let mut rec = vec![h.to_string()];
        rec.extend(fc.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_sim_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)?;
    let cfg: SimConfig = toml::from_str(&text).map_err(|e| FavarError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(setting: &str, config: Option<&Path>, seed: Option<u64>, extra: usize, out: &Path) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_sim_config(p)?,
        None => SimConfig::setting(setting)?,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sys = simulate_system(&cfg, extra)?;
    fs::create_dir_all(out)?;
    let dates = monthly_dates(parse_date("2000-01")?, cfg.n + extra);
    write_panel_csv(&out.join("x.csv"), &dates, &sys.x)?;
    write_panel_csv(&out.join("y.csv"), &dates, &sys.y)?;
    write_panel_csv(&out.join("f.csv"), &dates, &sys.f)?;
    write_matrix(&out.join("loading.csv"), &sys.params.loading)?;
    write_matrix(&out.join("coeff.csv"), &sys.params.coeff)?;
    for (k, a) in sys.params.transitions.iter().enumerate() {
        write_matrix(&out.join(format!("transition_{}.csv", k + 1)), a)?;
    }
    let column = |v: &nalgebra::DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(&out.join("sigma_e.csv"), &column(&sys.params.sigma_e))?;
    let manifest = toml::to_string(&cfg).map_err(|e| FavarError::Config(e.to_string()))?;
    fs::write(out.join("simulation.toml"), manifest)?;
    println!("wrote {} rows to {}", cfg.n + extra, out.display());
    Ok(())
}

fn cmd_bench(setting: &str, reps: Option<usize>, seed: u64, fast: bool, config: Option<&Path>, out: &Path) -> Result<()> {
    let reps = reps.unwrap_or(if fast { FAST_REPLICATIONS } else { DEFAULT_REPLICATIONS });
    let mut spec = match config {
        Some(p) => BenchSpec::custom(setting.to_ascii_uppercase(), read_sim_config(p)?, reps, seed),
        None => BenchSpec::preset(setting, reps, seed)?,
    };
    if fast {
        spec.fit.stage1.tol *= 10.0;
        spec.fit.stage1.lasso.tol *= 10.0;
        spec.fit.stage2.tol *= 10.0;
    }
    let report = run_setting(&spec)?;
    report.write(out)?;
    let (rank, err) = (report.rank(), report.err_theta());
    println!(
        "{}: {} replications ({} failed), rank {:.2} ({:.2}), Err Theta {:.3} ({:.3}) -> {}",
        spec.label,
        report.outcomes.len(),
        report.failures.len(),
        rank.mean,
        rank.sd,
        err.mean,
        err.sd,
        out.display()
    );
    Ok(())
}

fn cmd_init_study(seed: u64, dense: Option<f64>, sparse: Option<f64>, out: &Path) -> Result<()> {
    let mut spec = InitStudySpec { seed, ..InitStudySpec::default() };
    spec.lambda_ratio_dense = dense.unwrap_or(spec.lambda_ratio_dense);
    spec.lambda_ratio_sparse = sparse.unwrap_or(spec.lambda_ratio_sparse);
    let rows = run_init_study(&spec)?;
    write_init_study(&rows, out, &spec)?;
    for r in &rows {
        println!(
            "{:?} {:<10} rel_err {:.3} (equivalent {:.3}) converged {} after {}",
            r.regime,
            r.initializer.name(),
            r.rel_err,
            r.rel_err_equivalent,
            r.converged,
            r.iterations
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| FavarError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Command::Simulate {
            setting,
            config,
            seed,
            extra,
            out,
        } => cmd_simulate(&setting, config.as_deref(), seed, extra, &out),
        Command::Fit(args) => cmd_fit(&args, false),
        Command::Select(args) => cmd_fit(&args, true),
        Command::Forecast { fit, horizon, out } => cmd_forecast(&fit, horizon, out.as_deref()),
        Command::Bench {
            setting,
            reps,
            seed,
            fast,
            config,
            out,
        } => cmd_bench(&setting, reps, seed, fast, config.as_deref(), &out),
        Command::InitStudy {
            seed,
            lambda_ratio_dense,
            lambda_ratio_sparse,
            out,
        } => cmd_init_study(seed, lambda_ratio_dense, lambda_ratio_sparse, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
