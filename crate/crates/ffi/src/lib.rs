//! C ABI for `mcrkit`.
//!
//! Objects are exposed as opaque handles created by `*_new` / `*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`McrkitStatus`]; on failure a message is stored per thread and
//! can be copied out with [`mcrkit_last_error_message`]. Matrices are passed
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mcrkit::dataset::{load_csv, Dataset};
use mcrkit::error::{Error, ErrorCategory};
use mcrkit::estimators::{e_orig, reliance_from_losses, switched_loss, LossKind, RelianceMode, SwitchEstimator};
use mcrkit::linear_class::{EllipsoidConstraint, LinearClass, LinearModel};
use mcrkit::mcr_search::{search_mcr, SearchOptions, SolvableClass};
use mcrkit::rkhs_class::{KernelSpec, RkhsClass, RkhsProblem};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McrkitStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid arguments or configuration.
    ConfigError = 2,
    /// Unreadable or malformed data.
    DataError = 3,
    /// Numerical or search failure.
    SolverError = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
    /// Output buffer too small.
    BufferTooSmall = 6,
}

/// Which switched-loss estimator a class uses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McrkitEstimator {
    Switch = 0,
    Divide = 1,
}

/// How reliance compares switched and original losses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McrkitMode {
    Ratio = 0,
    Difference = 1,
}

/// Bounds on empirical model class reliance at one threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McrkitBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_difference: f64,
    pub upper_difference: f64,
    pub lower_tight: bool,
    pub upper_tight: bool,
}

/// Opaque dataset handle.
pub struct McrkitDataset(Dataset);

/// Opaque handle to a model class bound to a dataset.
pub struct McrkitClass(Box<dyn SolvableClass + Send>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> McrkitStatus {
    match err.category() {
        ErrorCategory::Config => McrkitStatus::ConfigError,
        ErrorCategory::Data => McrkitStatus::DataError,
        ErrorCategory::Solver => McrkitStatus::SolverError,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (McrkitStatus, String)>) -> McrkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            McrkitStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside mcrkit".into());
            McrkitStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (McrkitStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (McrkitStatus, String) {
    (McrkitStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (McrkitStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, (McrkitStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (McrkitStatus::ConfigError, format!("`{name}` is not valid UTF-8")))
}

fn estimator(e: McrkitEstimator) -> SwitchEstimator {
    match e {
        McrkitEstimator::Switch => SwitchEstimator::Switch,
        McrkitEstimator::Divide => SwitchEstimator::Divide,
    }
}

/// Length in bytes of the calling thread's last error message, excluding the
/// terminating NUL.
#[no_mangle]
pub extern "C" fn mcrkit_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message into `buf` (NUL-terminated). Returns
/// `BufferTooSmall` when `cap` is not larger than the message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_last_error_message(buf: *mut c_char, cap: usize) -> McrkitStatus {
    if buf.is_null() {
        return McrkitStatus::NullArgument;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if cap <= msg.len() {
            return McrkitStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
        *buf.add(msg.len()) = 0;
        McrkitStatus::Ok
    })
}

/// Build a dataset from row-major blocks `x1` (`n x p1`) and `x2` (`n x p2`).
///
/// # Safety
/// Array arguments must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_dataset_new(
    y: *const f64,
    n: usize,
    x1: *const f64,
    p1: usize,
    x2: *const f64,
    p2: usize,
    out: *mut *mut McrkitDataset,
) -> McrkitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let y = slice(y, n, "y")?.to_vec();
        let x1 = slice(x1, n * p1, "x1")?.to_vec();
        let x2 = slice(x2, n * p2, "x2")?.to_vec();
        let ds = Dataset::new(y, x1, p1, x2, p2).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(McrkitDataset(ds)));
        Ok(())
    })
}

/// Load a CSV file; `x1_cols` is a comma-separated list of column names.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_dataset_load_csv(
    path: *const c_char,
    outcome: *const c_char,
    x1_cols: *const c_char,
    out: *mut *mut McrkitDataset,
) -> McrkitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = string(path, "path")?;
        let outcome = string(outcome, "outcome")?;
        let cols: Vec<&str> = string(x1_cols, "x1_cols")?.split(',').map(str::trim).collect();
        let ds = load_csv(path, outcome, &cols).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(McrkitDataset(ds)));
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_dataset_rows(ds: *const McrkitDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_dataset_free(ds: *mut McrkitDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Original loss, switched loss and reliance of the linear model
/// `intercept + beta' (x1, x2)` under squared error.
///
/// # Safety
/// `beta` must hold `p1 + p2` values; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_linear_model_reliance(
    ds: *const McrkitDataset,
    beta: *const f64,
    beta_len: usize,
    intercept: f64,
    est: McrkitEstimator,
    mode: McrkitMode,
    out_e_orig: *mut f64,
    out_e_switch: *mut f64,
    out_reliance: *mut f64,
) -> McrkitStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        if out_e_orig.is_null() || out_e_switch.is_null() || out_reliance.is_null() {
            return Err(null("out"));
        }
        let beta = slice(beta, beta_len, "beta")?;
        if beta.len() != ds.p1() + ds.p2() {
            return Err(lib_err(Error::DimensionMismatch(format!(
                "beta has {} entries, data has {} covariates",
                beta.len(),
                ds.p1() + ds.p2()
            ))));
        }
        let model = LinearModel::from_stacked(beta, ds.p1(), intercept);
        let eo = e_orig(&model, LossKind::SquaredError, ds);
        let es = switched_loss(&model, LossKind::SquaredError, ds, estimator(est));
        let mode = match mode {
            McrkitMode::Ratio => RelianceMode::Ratio,
            McrkitMode::Difference => RelianceMode::Difference,
        };
        *out_e_orig = eo;
        *out_e_switch = es;
        *out_reliance = reliance_from_losses(eo, es, mode).map_err(lib_err)?;
        Ok(())
    })
}

/// Linear class bound to `ds`. With `weights` null the class is
/// unconstrained; otherwise slopes satisfy `sum_j weights[j] beta_j^2 <= radius`.
///
/// # Safety
/// `weights` must be null or hold `p1 + p2` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_linear_class_new(
    ds: *const McrkitDataset,
    intercept: bool,
    weights: *const f64,
    radius: f64,
    est: McrkitEstimator,
    out: *mut *mut McrkitClass,
) -> McrkitStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let constraint = if weights.is_null() {
            None
        } else {
            let w = slice(weights, ds.p1() + ds.p2(), "weights")?;
            Some(EllipsoidConstraint::diagonal(w, radius).map_err(lib_err)?)
        };
        let class = LinearClass::build(ds, intercept, constraint, estimator(est)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(McrkitClass(Box::new(class))));
        Ok(())
    })
}

/// RBF kernel class with dictionary and offset taken from `train`, norm
/// bound `r_k`, bound to the rows of `analysis`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_rkhs_class_new(
    train: *const McrkitDataset,
    analysis: *const McrkitDataset,
    sigma: f64,
    r_k: f64,
    est: McrkitEstimator,
    out: *mut *mut McrkitClass,
) -> McrkitStatus {
    guard(|| {
        let train = &train.as_ref().ok_or_else(|| null("train"))?.0;
        let analysis = &analysis.as_ref().ok_or_else(|| null("analysis"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let kernel = KernelSpec::rbf(sigma).map_err(lib_err)?;
        let class = RkhsClass::from_training(train, kernel, r_k).map_err(lib_err)?;
        let problem = RkhsProblem::new(analysis, class, estimator(est)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(McrkitClass(Box::new(problem))));
        Ok(())
    })
}

/// Number of parameters of class members, or 0 for a null handle.
///
/// # Safety
/// `class` must be null or a live class handle.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_class_param_dim(class: *const McrkitClass) -> usize {
    class.as_ref().map_or(0, |c| c.0.param_dim())
}

/// Global minimizer of `xi_orig e_orig + xi_switch e_switch` over the class.
/// `params` receives `mcrkit_class_param_dim` values.
///
/// # Safety
/// `params` must hold `cap` writable values; other outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_class_minimize(
    class: *const McrkitClass,
    xi_orig: f64,
    xi_switch: f64,
    params: *mut f64,
    cap: usize,
    out_e_orig: *mut f64,
    out_e_switch: *mut f64,
) -> McrkitStatus {
    guard(|| {
        let class = &class.as_ref().ok_or_else(|| null("class"))?.0;
        if params.is_null() || out_e_orig.is_null() || out_e_switch.is_null() {
            return Err(null("out"));
        }
        let dim = class.param_dim();
        if cap < dim {
            return Err((McrkitStatus::BufferTooSmall, format!("params needs {dim} entries, got {cap}")));
        }
        let m = class.minimize_combination(xi_orig, xi_switch).map_err(lib_err)?;
        ptr::copy_nonoverlapping(m.params.as_ptr(), params, dim);
        *out_e_orig = m.e_orig;
        *out_e_switch = m.e_switch;
        Ok(())
    })
}

/// Bounds on empirical reliance over class members with `e_orig <= eps_abs`.
///
/// # Safety
/// `class` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_class_search(class: *const McrkitClass, eps_abs: f64, out: *mut McrkitBounds) -> McrkitStatus {
    guard(|| {
        let class = &class.as_ref().ok_or_else(|| null("class"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = search_mcr(class.as_ref(), eps_abs, &SearchOptions::default()).map_err(lib_err)?;
        *out = McrkitBounds {
            lower: r.lower,
            upper: r.upper,
            lower_difference: r.lower_difference,
            upper_difference: r.upper_difference,
            lower_tight: r.lower_tight,
            upper_tight: r.upper_tight,
        };
        Ok(())
    })
}

/// # Safety
/// `class` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcrkit_class_free(class: *mut McrkitClass) {
    if !class.is_null() {
        drop(Box::from_raw(class));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcrkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
