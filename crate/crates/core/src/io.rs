//! Panel ingestion with stationarity transforms, the run configuration file,
//! network export and the on-disk fit bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FavarError, Result};
use crate::model::TimeSeriesPanel;
use crate::pipeline::{FavarFit, FitOptions};
use crate::select::{PicPenalty, SelectionGrid, Stage1Options};
use crate::solvers::LassoSettings;

/// Transformation code: 1 level, 2 first difference, 3 second difference,
/// 4 log, 5 log difference, 6 second log difference, 7 first difference of
/// the growth rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TCode(u8);

impl TCode {
    pub fn new(code: u8) -> Result<Self> {
        if (1..=7).contains(&code) {
            Ok(Self(code))
        } else {
            Err(FavarError::InvalidArgument(format!("transformation code {code} outside 1..=7")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Observations lost at the start of the series.
    pub fn lost(self) -> usize {
        match self.0 {
            1 | 4 => 0,
            2 | 5 => 1,
            _ => 2,
        }
    }
}

impl TryFrom<u8> for TCode {
    type Error = FavarError;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TCode> for u8 {
    fn from(c: TCode) -> u8 {
        c.0
    }
}

fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

fn logs(v: &[f64]) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(FavarError::InvalidArgument(format!(
                    "log transform needs positive values, got {x} at position {i}"
                )))
            }
        })
        .collect()
}

/// Applies a transformation code; the output is shorter by [`TCode::lost`].
pub fn apply_tcode(series: &[f64], code: TCode) -> Result<Vec<f64>> {
    if series.len() <= code.lost() {
        return Err(FavarError::InvalidArgument(format!(
            "series of length {} too short for code {}",
            series.len(),
            code.0
        )));
    }
    Ok(match code.0 {
        1 => series.to_vec(),
        2 => diff(series),
        3 => diff(&diff(series)),
        4 => logs(series)?,
        5 => diff(&logs(series)?),
        6 => diff(&diff(&logs(series)?)),
        7 => {
            let growth = series
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    if w[0] == 0.0 {
                        Err(FavarError::InvalidArgument(format!(
                            "growth rate undefined: zero value at position {i}"
                        )))
                    } else {
                        Ok(w[1] / w[0] - 1.0)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            diff(&growth)
        }
        _ => unreachable!("validated code"),
    })
}

/// Per-series codes with a default for unlisted series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    #[serde(default = "level")]
    pub default: TCode,
    #[serde(default)]
    pub series: BTreeMap<String, TCode>,
}

fn level() -> TCode {
    TCode(1)
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self::uniform(level())
    }
}

impl TransformSpec {
    pub fn uniform(code: TCode) -> Self {
        Self {
            default: code,
            series: BTreeMap::new(),
        }
    }

    pub fn code_for(&self, label: &str) -> TCode {
        self.series.get(label).copied().unwrap_or(self.default)
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| FavarError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_text(path: &Path) -> Result<String> {
    std::io::read_to_string(open(path)?).map_err(FavarError::Io)
}

/// Parses `YYYY-MM` (first of the month) or `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d"))
        .map_err(|_| FavarError::Parse(format!("unparseable date '{s}' (expected YYYY-MM or YYYY-MM-DD)")))
}

/// Inclusive date range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    #[serde(default)]
    pub name: String,
    #[serde(with = "date_text")]
    pub start: NaiveDate,
    #[serde(with = "date_text")]
    pub end: NaiveDate,
}

mod date_text {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.format("%Y-%m-%d").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_date(&text).map_err(serde::de::Error::custom)
    }
}

impl Window {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// A panel with one date per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedPanel {
    pub dates: Vec<NaiveDate>,
    pub panel: TimeSeriesPanel,
}

impl DatedPanel {
    /// Keeps the named series, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|name| {
                self.panel
                    .labels()
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| FavarError::Config(format!("series '{name}' not in panel")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dates: self.dates.clone(),
            panel: TimeSeriesPanel::new(self.panel.values().select_columns(idx.iter()), names.to_vec())?,
        })
    }
}

/// Raw CSV contents: dates, labels and a complete value matrix.
pub fn read_panel_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(FavarError::Parse(format!(
            "{}: need a date column and at least one series",
            path.display()
        )));
    }
    let labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut missing = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let date_text = rec.get(0).unwrap_or("");
        dates.push(parse_date(date_text)?);
        for (j, label) in labels.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                missing.push(format!("{date_text}/{label}"));
                rows.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                FavarError::Parse(format!("row {} column '{label}': not a number: '{cell}'", r + 2))
            })?;
            if !v.is_finite() {
                missing.push(format!("{date_text}/{label}"));
            }
            rows.push(v);
        }
    }
    if !missing.is_empty() {
        return Err(FavarError::MissingValues(missing));
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FavarError::Parse(format!("{}: dates must be strictly increasing", path.display())));
    }
    let m = DMatrix::from_row_slice(dates.len(), labels.len(), &rows);
    Ok((dates, labels, m))
}

/// Loads a CSV panel, keeps the rows inside `window`, transforms each series
/// and trims all series to the shortest transformed length (dropping the
/// earliest rows).
pub fn load_panel(path: &Path, transform: &TransformSpec, window: Option<&Window>) -> Result<DatedPanel> {
    let (dates, labels, values) = read_panel_csv(path)?;
    let keep: Vec<usize> = (0..dates.len())
        .filter(|&i| window.is_none_or(|w| w.contains(dates[i])))
        .collect();
    if keep.is_empty() {
        return Err(FavarError::InvalidArgument(format!(
            "{}: no rows inside the requested window",
            path.display()
        )));
    }
    let mut columns = Vec::with_capacity(labels.len());
    for (j, label) in labels.iter().enumerate() {
        let raw: Vec<f64> = keep.iter().map(|&i| values[(i, j)]).collect();
        let t = apply_tcode(&raw, transform.code_for(label))
            .map_err(|e| FavarError::InvalidArgument(format!("series '{label}': {e}")))?;
        columns.push(t);
    }
    let len = columns.iter().map(Vec::len).min().unwrap_or(0);
    let n = keep.len();
    let out = DMatrix::from_fn(len, labels.len(), |i, j| {
        let c = &columns[j];
        c[c.len() - len + i]
    });
    let out_dates = keep[n - len..].iter().map(|&i| dates[i]).collect();
    Ok(DatedPanel {
        dates: out_dates,
        panel: TimeSeriesPanel::new(out, labels)?,
    })
}

/// Writes a dated panel in the format [`load_panel`] reads. Values use the
/// shortest representation that parses back to the same number.
pub fn write_panel_csv(path: &Path, dates: &[NaiveDate], panel: &TimeSeriesPanel) -> Result<()> {
    if dates.len() != panel.n() {
        return Err(crate::error::dim_mismatch("panel dates", panel.n(), dates.len()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.labels().iter().cloned());
    w.write_record(&header)?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(panel.values().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Consecutive month starts beginning at `start`.
pub fn monthly_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n)
        .map(|k| start.checked_add_months(chrono::Months::new(k as u32)).expect("date in range"))
        .collect()
}

/// Keeps the dates present in both panels.
pub fn align_panels(a: &DatedPanel, b: &DatedPanel) -> Result<(DatedPanel, DatedPanel)> {
    let common: Vec<NaiveDate> = a.dates.iter().filter(|d| b.dates.binary_search(d).is_ok()).copied().collect();
    if common.len() < 2 {
        return Err(FavarError::InvalidArgument(format!(
            "panels share {} dates, need at least 2",
            common.len()
        )));
    }
    let pick = |p: &DatedPanel| -> Result<DatedPanel> {
        let rows: Vec<usize> = common.iter().map(|d| p.dates.binary_search(d).expect("common date")).collect();
        let v = p.panel.values().select_rows(rows.iter());
        Ok(DatedPanel {
            dates: common.clone(),
            panel: TimeSeriesPanel::new(v, p.panel.labels().to_vec())?,
        })
    };
    Ok((pick(a)?, pick(b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
    /// `1` or `-1`.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    pub edges: Vec<Edge>,
    /// Sum of incident absolute weights per node, in label order.
    pub weighted_degree: Vec<(String, f64)>,
}

/// Edges `labels[j] -> labels[i]` for entries `|A[i, j]| > threshold`: column
/// `j` drives row `i` under `z_t = A z_{t-1}`.
pub fn export_network(a: &DMatrix<f64>, labels: &[String], threshold: f64) -> Result<Network> {
    if !a.is_square() || a.nrows() != labels.len() {
        return Err(crate::error::dim_mismatch(
            "network matrix",
            format!("{0}x{0}", labels.len()),
            crate::model::fmt_shape(a),
        ));
    }
    let mut edges = Vec::new();
    let mut degree = vec![0.0; labels.len()];
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let w = a[(i, j)];
            if w.abs() > threshold {
                edges.push(Edge {
                    source: labels[j].clone(),
                    target: labels[i].clone(),
                    weight: w,
                    sign: if w > 0.0 { 1 } else { -1 },
                });
                degree[j] += w.abs();
                if i != j {
                    degree[i] += w.abs();
                }
            }
        }
    }
    Ok(Network {
        edges,
        weighted_degree: labels.iter().cloned().zip(degree).collect(),
    })
}

/// Writes `edges.csv` (source,target,weight,sign) and `nodes.csv`.
pub fn write_network(net: &Network, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}edges.csv")))?;
    w.write_record(["source", "target", "weight", "sign"])?;
    for e in &net.edges {
        w.write_record([e.source.clone(), e.target.clone(), e.weight.to_string(), e.sign.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}nodes.csv")))?;
    w.write_record(["node", "weighted_degree"])?;
    for (n, d) in &net.weighted_degree {
        w.write_record([n.clone(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Version of the run configuration schema understood by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Run configuration, read from TOML.
///
/// ```toml
/// version = 1
///
/// [data]
/// x_panel = "prices.csv"          # relative to the config file
/// y_panel = "macro.csv"
/// x_transform = { default = 5 }
/// y_transform = { default = 1, series = { CPI = 6 } }
///
/// [[periods]]
/// name = "pre"
/// start = "2001-01"
/// end = "2006-12"
///
/// [estimation]
/// d = 2
/// pic_penalty = "per_regression"  # or "literal"
///
/// [grid]
/// ranks = [1, 2, 3, 4, 5, 6]
/// lambda_gamma = { log_spaced = { points = 20, min_ratio = 0.01 } }
/// lambda_a = { values = [0.05, 0.1, 0.2] }
///
/// [output]
/// dir = "out"
/// network_threshold = 0.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub data: DataConfig,
    /// Sub-periods estimated separately; the whole sample when empty.
    #[serde(default)]
    pub periods: Vec<Window>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub grid: SelectionGrid,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub x_panel: PathBuf,
    pub y_panel: PathBuf,
    #[serde(default)]
    pub x_transform: TransformSpec,
    #[serde(default)]
    pub y_transform: TransformSpec,
    /// Series to keep from the observed file; all when absent.
    #[serde(default)]
    pub x_columns: Option<Vec<String>>,
    /// Series to keep from the calibration file; all when absent.
    #[serde(default)]
    pub y_columns: Option<Vec<String>>,
}

impl DataConfig {
    /// Loads, selects, transforms and date-aligns both panels for one window.
    pub fn load(&self, window: Option<&Window>) -> Result<(DatedPanel, DatedPanel)> {
        let one = |path: &Path, t: &TransformSpec, cols: &Option<Vec<String>>| -> Result<DatedPanel> {
            let p = load_panel(path, t, window)?;
            match cols {
                Some(c) => p.select_columns(c),
                None => Ok(p),
            }
        };
        let x = one(&self.x_panel, &self.x_transform, &self.x_columns)?;
        let y = one(&self.y_panel, &self.y_transform, &self.y_columns)?;
        align_panels(&x, &y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub d: usize,
    pub factors: Option<usize>,
    pub pic_penalty: PicPenalty,
    pub tol: f64,
    pub max_iter: usize,
    pub accelerate: bool,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let s1 = Stage1Options::default();
        let lasso = LassoSettings::default();
        Self {
            d: 1,
            factors: None,
            pic_penalty: s1.penalty,
            tol: s1.tol,
            max_iter: s1.max_iter,
            accelerate: s1.accelerate,
            lasso_tol: lasso.tol,
            lasso_max_iter: lasso.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub network_threshold: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("favar-out"),
            network_threshold: 0.0,
        }
    }
}

impl RunConfig {
    /// Reads and validates a config; relative data paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data.x_panel, &mut cfg.data.y_panel] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FavarError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(FavarError::Config(format!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.estimation.d == 0 {
            return Err(FavarError::Config("estimation.d must be >= 1".into()));
        }
        for w in &self.periods {
            if w.start > w.end {
                return Err(FavarError::Config(format!("period '{}' ends before it starts", w.name)));
            }
        }
        for pair in self.periods.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(FavarError::Config(format!(
                    "periods '{}' and '{}' overlap or are out of order",
                    pair[0].name, pair[1].name
                )));
            }
        }
        Ok(())
    }

    /// Named windows to estimate; a single unbounded `full` window when none
    /// are configured.
    pub fn windows(&self) -> Vec<(String, Option<Window>)> {
        if self.periods.is_empty() {
            return vec![("full".into(), None)];
        }
        self.periods
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let name = if w.name.is_empty() { format!("period{}", k + 1) } else { w.name.clone() };
                (name, Some(w.clone()))
            })
            .collect()
    }

    pub fn fit_options(&self) -> FitOptions {
        let e = &self.estimation;
        let lasso = LassoSettings {
            tol: e.lasso_tol,
            max_iter: e.lasso_max_iter,
            ..LassoSettings::default()
        };
        FitOptions {
            grid: self.grid.clone(),
            stage1: Stage1Options {
                penalty: e.pic_penalty,
                tol: e.tol,
                max_iter: e.max_iter,
                accelerate: e.accelerate,
                lasso,
            },
            stage2: lasso,
            d: e.d,
            factors: e.factors,
        }
    }
}

/// Headerless numeric CSV, one matrix row per line.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| FavarError::Parse(format!("{}: bad number '{s}'", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(FavarError::Parse(format!("{}: ragged rows", path.display())))
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

/// Metadata stored next to the matrices of a fit bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub crate_version: String,
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
    pub d: usize,
    pub rank: usize,
    pub lambda_gamma: f64,
    pub lambda_a: f64,
    pub stage1_iterations: usize,
    pub final_objective: f64,
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
}

pub const BUNDLE_VERSION: u32 = 1;

/// Writes a fit as headerless CSV matrices (`theta_hat`, `gamma_hat`,
/// `f_hat`, `lambda_hat`, `a_hat_<k>`, `x_centered`, `x_means`, `y_means`,
/// `objective_trace`) plus `fit.toml`.
pub fn save_fit(dir: &Path, fit: &FavarFit, x_labels: &[String], y_labels: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("theta_hat.csv"), &fit.theta_hat)?;
    write_matrix(&dir.join("gamma_hat.csv"), &fit.gamma_hat)?;
    write_matrix(&dir.join("f_hat.csv"), &fit.f_hat)?;
    write_matrix(&dir.join("lambda_hat.csv"), &fit.lambda_hat)?;
    for (k, a) in fit.a_hat.iter().enumerate() {
        write_matrix(&dir.join(format!("a_hat_{}.csv", k + 1)), a)?;
    }
    write_matrix(&dir.join("x_centered.csv"), &fit.x_centered)?;
    write_matrix(&dir.join("x_means.csv"), &DMatrix::from_column_slice(fit.x_means.len(), 1, fit.x_means.as_slice()))?;
    write_matrix(&dir.join("y_means.csv"), &DMatrix::from_column_slice(fit.y_means.len(), 1, fit.y_means.as_slice()))?;
    write_matrix(
        &dir.join("objective_trace.csv"),
        &DMatrix::from_column_slice(fit.objective_trace.len(), 1, &fit.objective_trace),
    )?;
    let meta = BundleMeta {
        format_version: BUNDLE_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        n: fit.f_hat.nrows(),
        p1: fit.p1(),
        p2: fit.x_centered.ncols(),
        q: fit.theta_hat.ncols(),
        d: fit.d(),
        rank: fit.rank,
        lambda_gamma: fit.lambda_gamma,
        lambda_a: fit.lambda_a,
        stage1_iterations: fit.stage1_iterations,
        final_objective: fit.objective_trace.last().copied().unwrap_or(f64::NAN),
        x_labels: x_labels.to_vec(),
        y_labels: y_labels.to_vec(),
    };
    let text = toml::to_string(&meta).map_err(|e| FavarError::Config(e.to_string()))?;
    fs::write(dir.join("fit.toml"), text)?;
    Ok(())
}

/// Reads a bundle written by [`save_fit`]. Score tables are not stored.
pub fn load_fit(dir: &Path) -> Result<(FavarFit, BundleMeta)> {
    let meta: BundleMeta = toml::from_str(&read_text(&dir.join("fit.toml"))?)
        .map_err(|e| FavarError::Config(e.to_string()))?;
    if meta.format_version != BUNDLE_VERSION {
        return Err(FavarError::Config(format!("unsupported bundle version {}", meta.format_version)));
    }
    let column = |name: &str| -> Result<DVector<f64>> {
        let m = read_matrix(&dir.join(name))?;
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    };
    let a_hat = (1..=meta.d)
        .map(|k| read_matrix(&dir.join(format!("a_hat_{k}.csv"))))
        .collect::<Result<Vec<_>>>()?;
    let fit = FavarFit {
        theta_hat: read_matrix(&dir.join("theta_hat.csv"))?,
        gamma_hat: read_matrix(&dir.join("gamma_hat.csv"))?,
        f_hat: read_matrix(&dir.join("f_hat.csv"))?,
        lambda_hat: read_matrix(&dir.join("lambda_hat.csv"))?,
        a_hat,
        lambda_gamma: meta.lambda_gamma,
        rank: meta.rank,
        lambda_a: meta.lambda_a,
        objective_trace: column("objective_trace.csv")?.iter().copied().collect(),
        stage1_iterations: meta.stage1_iterations,
        x_centered: read_matrix(&dir.join("x_centered.csv"))?,
        x_means: column("x_means.csv")?,
        y_means: column("y_means.csv")?,
        pic_scores: Vec::new(),
        bic_scores: Vec::new(),
    };
    let p = meta.p1 + meta.p2;
    if fit.a_hat.iter().any(|a| a.shape() != (p, p)) || fit.x_means.len() != meta.p2 {
        return Err(FavarError::Config("bundle matrices disagree with fit.toml".into()));
    }
    Ok((fit, meta))
}
