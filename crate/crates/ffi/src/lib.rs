//! C ABI over `favar-core`.
//!
//! Matrices cross the boundary as row-major `double` buffers. Every call
//! returns a [`FavarStatus`]; on failure a thread-local message is available
//! from [`favar_last_error`]. Handles are opaque and must be released with
//! their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use favar::pipeline::{fit_favar, FavarFit, FitOptions};
use favar::select::{LambdaGrid, PicPenalty};
use favar::simulate::{simulate_system, SimConfig, SimulatedSystem};
use favar::FavarError;
use nalgebra::DMatrix;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FavarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// No grid point of the selection converged.
    NoConvergence = 4,
    /// Degenerate data: zero residuals, zero signal, failed decompositions.
    Numerical = 5,
    Io = 6,
    /// The output buffer is shorter than required.
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &FavarError) -> FavarStatus {
    use FavarError::*;
    match err {
        DimensionMismatch { .. } => FavarStatus::DimensionMismatch,
        NoConvergedFit { .. } => FavarStatus::NoConvergence,
        NonFinite(_) | ZeroResidual(_) | ZeroSignal(_) | ZeroReference(_) | Decomposition(_) | Unstable(_)
        | DegenerateDraw(_) | Identification(_) => FavarStatus::Numerical,
        Io(_) | Csv(_) | Parse(_) | MissingValues(_) | Config(_) => FavarStatus::Io,
        InvalidArgument(_) | NotCentered { .. } => FavarStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (FavarStatus, String)>) -> FavarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FavarStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FavarStatus::Panic
        }
    }
}

type Outcome = Result<(), (FavarStatus, String)>;

fn core(err: FavarError) -> (FavarStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (FavarStatus, String) {
    (FavarStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (FavarStatus, String) {
    (FavarStatus::InvalidArgument, msg.into())
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, (FavarStatus, String)> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{what}: size overflow")))?;
    // SAFETY: caller guarantees `data` points to `rows * cols` doubles.
    let slice = unsafe { std::slice::from_raw_parts(data, len) };
    Ok(DMatrix::from_row_slice(rows, cols, slice))
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Outcome {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let need = m.len();
    if len < need {
        return Err((FavarStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
    }
    // SAFETY: caller guarantees `out` has room for `len >= need` doubles.
    let dst = unsafe { std::slice::from_raw_parts_mut(out, need) };
    for (k, v) in m.transpose().iter().enumerate() {
        dst[k] = *v;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn favar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn favar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Estimation settings; obtain defaults from [`favar_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FavarFitOptions {
    /// VAR lag order, >= 1.
    pub lags: usize,
    /// Largest rank searched; 0 for the default.
    pub max_rank: usize,
    /// Number of log-spaced penalty values in each grid.
    pub lambda_points: usize,
    /// Smallest grid penalty as a fraction of the largest.
    pub lambda_min_ratio: f64,
    /// Factors to extract; 0 to use the selected rank.
    pub factors: usize,
    /// Non-zero to count nonzeros over the whole coefficient matrix in the
    /// rank criterion instead of per regression.
    pub literal_penalty: u8,
}

#[no_mangle]
pub extern "C" fn favar_fit_options_default() -> FavarFitOptions {
    FavarFitOptions {
        lags: 1,
        max_rank: 0,
        lambda_points: favar::select::DEFAULT_LAMBDA_POINTS,
        lambda_min_ratio: favar::select::DEFAULT_LAMBDA_MIN_RATIO,
        factors: 0,
        literal_penalty: 0,
    }
}

impl FavarFitOptions {
    fn to_core(self, n: usize, q: usize) -> Result<FitOptions, (FavarStatus, String)> {
        if self.lags == 0 {
            return Err(invalid("lags must be >= 1"));
        }
        let grid = LambdaGrid::LogSpaced {
            points: self.lambda_points,
            min_ratio: self.lambda_min_ratio,
        };
        let mut opts = FitOptions {
            d: self.lags,
            factors: (self.factors > 0).then_some(self.factors),
            ..FitOptions::default()
        };
        opts.grid.lambda_gamma = grid.clone();
        opts.grid.lambda_a = grid;
        if self.max_rank > 0 {
            opts.grid.ranks = Some((1..=self.max_rank.min(n).min(q)).collect());
        }
        if self.literal_penalty != 0 {
            opts.stage1.penalty = PicPenalty::Literal;
        }
        Ok(opts)
    }
}

/// Opaque estimation result.
pub struct FavarFitHandle {
    fit: FavarFit,
}

/// Two-stage fit of `x` (`n x p2`) and `y` (`n x q`), both row-major and
/// uncentered. `options` may be null for defaults. On success `*out` owns a
/// handle to release with [`favar_fit_free`].
///
/// # Safety
/// `x` and `y` must point to `n * p2` and `n * q` doubles; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    p2: usize,
    q: usize,
    options: *const FavarFitOptions,
    out: *mut *mut FavarFitHandle,
) -> FavarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: forwarded caller guarantees.
        let (xm, ym) = unsafe { (read_matrix(x, n, p2, "x")?, read_matrix(y, n, q, "y")?) };
        let o = if options.is_null() {
            favar_fit_options_default()
        } else {
            // SAFETY: non-null and points to an options struct.
            unsafe { *options }
        };
        let fit = fit_favar(&xm, &ym, &o.to_core(n, q)?).map_err(core)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(FavarFitHandle { fit })) };
        Ok(())
    })
}

/// Releases a fit handle; null is ignored.
///
/// # Safety
/// `handle` must come from [`favar_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_free(handle: *mut FavarFitHandle) {
    if !handle.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Dimensions of a fit.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FavarFitDims {
    pub n: usize,
    /// Number of extracted factors.
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
    pub lags: usize,
    /// Selected rank of the factor hyperplane.
    pub rank: usize,
}

unsafe fn fit_ref<'a>(handle: *const FavarFitHandle) -> Result<&'a FavarFit, (FavarStatus, String)> {
    if handle.is_null() {
        return Err(null("handle"));
    }
    // SAFETY: non-null handles come from `favar_fit`.
    Ok(unsafe { &(*handle).fit })
}

/// # Safety
/// `handle` must be a live fit handle and `dims` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_dims(handle: *const FavarFitHandle, dims: *mut FavarFitDims) -> FavarStatus {
    guard(|| {
        let fit = unsafe { fit_ref(handle)? };
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = FavarFitDims {
            n: fit.f_hat.nrows(),
            p1: fit.p1(),
            p2: fit.x_centered.ncols(),
            q: fit.theta_hat.ncols(),
            lags: fit.d(),
            rank: fit.rank,
        };
        unsafe { *dims = d };
        Ok(())
    })
}

/// Selected penalties: calibration fit into `lambda_gamma`, VAR fit into
/// `lambda_a`.
///
/// # Safety
/// `handle` must be live; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_penalties(
    handle: *const FavarFitHandle,
    lambda_gamma: *mut f64,
    lambda_a: *mut f64,
) -> FavarStatus {
    guard(|| {
        let fit = unsafe { fit_ref(handle)? };
        if lambda_gamma.is_null() || lambda_a.is_null() {
            return Err(null("penalty output"));
        }
        unsafe {
            *lambda_gamma = fit.lambda_gamma;
            *lambda_a = fit.lambda_a;
        }
        Ok(())
    })
}

/// Which estimated matrix to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FavarMatrix {
    /// `n x q` factor hyperplane.
    Theta = 0,
    /// `q x p2` sparse coefficients.
    Gamma = 1,
    /// `n x p1` factors.
    Factors = 2,
    /// `q x p1` loadings.
    Loadings = 3,
}

/// Copies a matrix (row-major) into `buf` of `len` doubles.
///
/// # Safety
/// `handle` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_matrix(
    handle: *const FavarFitHandle,
    which: FavarMatrix,
    buf: *mut f64,
    len: usize,
) -> FavarStatus {
    guard(|| {
        let fit = unsafe { fit_ref(handle)? };
        let m = match which {
            FavarMatrix::Theta => &fit.theta_hat,
            FavarMatrix::Gamma => &fit.gamma_hat,
            FavarMatrix::Factors => &fit.f_hat,
            FavarMatrix::Loadings => &fit.lambda_hat,
        };
        unsafe { write_matrix(m, buf, len) }
    })
}

/// Copies the `(p1 + p2) x (p1 + p2)` transition matrix of lag `lag`
/// (1-based), factors first.
///
/// # Safety
/// `handle` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_transition(
    handle: *const FavarFitHandle,
    lag: usize,
    buf: *mut f64,
    len: usize,
) -> FavarStatus {
    guard(|| {
        let fit = unsafe { fit_ref(handle)? };
        if lag == 0 || lag > fit.d() {
            return Err(invalid(format!("lag {lag} outside 1..={}", fit.d())));
        }
        unsafe { write_matrix(&fit.a_hat[lag - 1], buf, len) }
    })
}

/// `h`-step forecast of the `p2` observed series on the original scale.
///
/// # Safety
/// `handle` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn favar_fit_forecast(
    handle: *const FavarFitHandle,
    horizon: usize,
    buf: *mut f64,
    len: usize,
) -> FavarStatus {
    guard(|| {
        let fit = unsafe { fit_ref(handle)? };
        let fc = fit.forecast(horizon).map_err(core)?;
        let m = DMatrix::from_column_slice(1, fc.len(), fc.as_slice());
        unsafe { write_matrix(&m, buf, len) }
    })
}

/// Opaque synthetic system.
pub struct FavarSimHandle {
    sys: SimulatedSystem,
}

/// Simulates preset `setting` (e.g. "A1") with `extra` rows beyond its sample
/// size.
///
/// # Safety
/// `setting` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn favar_simulate(
    setting: *const c_char,
    seed: u64,
    extra: usize,
    out: *mut *mut FavarSimHandle,
) -> FavarStatus {
    guard(|| {
        if setting.is_null() {
            return Err(null("setting"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller passes a NUL-terminated string.
        let id = unsafe { CStr::from_ptr(setting) }
            .to_str()
            .map_err(|_| invalid("setting is not UTF-8"))?;
        let mut cfg = SimConfig::setting(id).map_err(core)?;
        cfg.seed = seed;
        let sys = simulate_system(&cfg, extra).map_err(core)?;
        unsafe { *out = Box::into_raw(Box::new(FavarSimHandle { sys })) };
        Ok(())
    })
}

/// Rows, observed series and calibration series of a simulated system.
///
/// # Safety
/// `handle` must be live; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn favar_sim_dims(
    handle: *const FavarSimHandle,
    n: *mut usize,
    p2: *mut usize,
    q: *mut usize,
) -> FavarStatus {
    guard(|| {
        if handle.is_null() {
            return Err(null("handle"));
        }
        if n.is_null() || p2.is_null() || q.is_null() {
            return Err(null("dimension output"));
        }
        let sys = unsafe { &(*handle).sys };
        unsafe {
            *n = sys.x.n();
            *p2 = sys.x.m();
            *q = sys.y.m();
        }
        Ok(())
    })
}

/// Copies the observed panel (`which = 0`) or the calibration panel
/// (`which = 1`), row-major.
///
/// # Safety
/// `handle` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn favar_sim_panel(
    handle: *const FavarSimHandle,
    which: u32,
    buf: *mut f64,
    len: usize,
) -> FavarStatus {
    guard(|| {
        if handle.is_null() {
            return Err(null("handle"));
        }
        let sys = unsafe { &(*handle).sys };
        let m = match which {
            0 => sys.x.values(),
            1 => sys.y.values(),
            _ => return Err(invalid(format!("panel selector {which} must be 0 or 1"))),
        };
        unsafe { write_matrix(m, buf, len) }
    })
}

/// Releases a simulation handle; null is ignored.
///
/// # Safety
/// `handle` must come from [`favar_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn favar_sim_free(handle: *mut FavarSimHandle) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = favar_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_and_bad_arguments() {
        let mut h = ptr::null_mut();
        let st = unsafe { favar_fit(ptr::null(), ptr::null(), 3, 1, 1, ptr::null(), &mut h) };
        assert_eq!(st, FavarStatus::NullPointer);
        assert!(last_error().contains("null"));
        let st = unsafe { favar_simulate(c"Z9".as_ptr(), 0, 0, ptr::null_mut()) };
        assert_eq!(st, FavarStatus::NullPointer);
        let mut s = ptr::null_mut();
        let st = unsafe { favar_simulate(c"Z9".as_ptr(), 0, 0, &mut s) };
        assert_eq!(st, FavarStatus::InvalidArgument);
        assert!(last_error().contains("Z9"));
        assert!(s.is_null());
        let mut dims = FavarFitDims::default();
        assert_eq!(unsafe { favar_fit_dims(ptr::null(), &mut dims) }, FavarStatus::NullPointer);
        unsafe {
            favar_fit_free(ptr::null_mut());
            favar_sim_free(ptr::null_mut());
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(favar_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn simulate_fit_forecast_round_trip() {
        let mut sim = ptr::null_mut();
        assert_eq!(unsafe { favar_simulate(c"A1".as_ptr(), 7, 1, &mut sim) }, FavarStatus::Ok);
        assert!(favar_last_error().is_null());
        let (mut n, mut p2, mut q) = (0, 0, 0);
        assert_eq!(unsafe { favar_sim_dims(sim, &mut n, &mut p2, &mut q) }, FavarStatus::Ok);
        assert_eq!((p2, q), (50, 100));
        let mut x = vec![0.0; n * p2];
        let mut y = vec![0.0; n * q];
        assert_eq!(unsafe { favar_sim_panel(sim, 0, x.as_mut_ptr(), x.len()) }, FavarStatus::Ok);
        assert_eq!(unsafe { favar_sim_panel(sim, 1, y.as_mut_ptr(), y.len()) }, FavarStatus::Ok);
        assert_eq!(
            unsafe { favar_sim_panel(sim, 0, x.as_mut_ptr(), 3) },
            FavarStatus::BufferTooSmall
        );
        unsafe { favar_sim_free(sim) };

        // keep it quick: a small grid on the first 150 rows of a column subset
        let rows = 150;
        let (p2s, qs) = (10, 30);
        let xs: Vec<f64> = (0..rows).flat_map(|i| x[i * p2..i * p2 + p2s].to_vec()).collect();
        let ys: Vec<f64> = (0..rows).flat_map(|i| y[i * q..i * q + qs].to_vec()).collect();
        let opts = FavarFitOptions {
            max_rank: 3,
            lambda_points: 4,
            lambda_min_ratio: 0.05,
            ..favar_fit_options_default()
        };
        let mut fit = ptr::null_mut();
        let st = unsafe { favar_fit(xs.as_ptr(), ys.as_ptr(), rows, p2s, qs, &opts, &mut fit) };
        assert_eq!(st, FavarStatus::Ok);
        let mut dims = FavarFitDims::default();
        assert_eq!(unsafe { favar_fit_dims(fit, &mut dims) }, FavarStatus::Ok);
        assert_eq!((dims.n, dims.p2, dims.q, dims.lags), (rows, p2s, qs, 1));
        assert!(dims.rank >= 1 && dims.rank <= 3 && dims.p1 == dims.rank);

        let mut loadings = vec![0.0; qs * dims.p1];
        assert_eq!(
            unsafe { favar_fit_matrix(fit, FavarMatrix::Loadings, loadings.as_mut_ptr(), loadings.len()) },
            FavarStatus::Ok
        );
        // identity on the leading block, row-major
        for i in 0..dims.p1 {
            for j in 0..dims.p1 {
                assert_eq!(loadings[i * dims.p1 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let p = dims.p1 + p2s;
        let mut a = vec![0.0; p * p];
        assert_eq!(unsafe { favar_fit_transition(fit, 1, a.as_mut_ptr(), a.len()) }, FavarStatus::Ok);
        assert_eq!(unsafe { favar_fit_transition(fit, 2, a.as_mut_ptr(), a.len()) }, FavarStatus::InvalidArgument);
        let mut fc = vec![0.0; p2s];
        assert_eq!(unsafe { favar_fit_forecast(fit, 2, fc.as_mut_ptr(), fc.len()) }, FavarStatus::Ok);
        assert!(fc.iter().all(|v| v.is_finite()));
        let (mut lg, mut la) = (0.0, 0.0);
        assert_eq!(unsafe { favar_fit_penalties(fit, &mut lg, &mut la) }, FavarStatus::Ok);
        assert!(lg > 0.0 && la > 0.0);
        unsafe { favar_fit_free(fit) };
    }
}
