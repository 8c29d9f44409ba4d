//! C ABI over the `bssanova` engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`BssStatus`]
//! and, on failure, records a message readable through
//! [`bss_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bssanova::gibbs::Hyperparameters;
use bssanova::model::{load_model, save_model};
use bssanova::{forward_select, BasisSet, Criterion, Error, GpModel, SelectionConfig};
use nalgebra::DMatrix;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BssStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    Data = 3,
    Parse = 4,
    Numerical = 5,
    Capability = 6,
    Format = 7,
    Divergence = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

impl From<&Error> for BssStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => BssStatus::InvalidArgument,
            Error::Domain(_) => BssStatus::Domain,
            Error::Data(_) => BssStatus::Data,
            Error::Parse { .. } => BssStatus::Parse,
            Error::Numerical(_) => BssStatus::Numerical,
            Error::Capability(_) => BssStatus::Capability,
            Error::Format(_) => BssStatus::Format,
            Error::Divergence { .. } => BssStatus::Divergence,
            Error::Io(_) => BssStatus::Io,
            Error::Selection { source, .. } | Error::State { source, .. } => source.as_ref().into(),
        }
    }
}

/// Selection criterion for [`bss_model_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BssCriterion {
    Bic = 0,
    Aic = 1,
}

/// Settings for [`bss_model_fit`]; start from [`bss_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BssFitOptions {
    pub criterion: BssCriterion,
    pub tolerance: usize,
    pub max_interaction_order: usize,
    pub max_stage: usize,
    pub a: f64,
    pub b: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub n_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl From<&BssFitOptions> for SelectionConfig {
    fn from(o: &BssFitOptions) -> Self {
        SelectionConfig {
            tolerance: o.tolerance,
            criterion: match o.criterion {
                BssCriterion::Bic => Criterion::Bic,
                BssCriterion::Aic => Criterion::Aic,
            },
            max_interaction_order: o.max_interaction_order,
            max_stage: o.max_stage,
            hyperparameters: Hyperparameters {
                a: o.a,
                b: o.b,
                a_tau: o.a_tau,
                b_tau: o.b_tau,
                n_draws: o.n_draws,
                burn_in: o.burn_in,
                seed: o.seed,
            },
            ..SelectionConfig::default()
        }
    }
}

/// Precomputed KL basis.
pub struct BssBasis(BasisSet);

/// Fitted regression model.
pub struct BssModel(GpModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Run `f`, translating errors and panics into a status.
fn guard<F>(f: F) -> BssStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BssStatus::Ok,
        Ok(Err(Failure::Engine(e))) => {
            set_last_error(e.to_string());
            (&e).into()
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is null"));
            BssStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            BssStatus::Panic
        }
    }
}

enum Failure {
    Engine(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid
    // for reads, per the documented contract.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `non_null`, for writes.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    // SAFETY: non-null, NUL-terminated per contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Row-major `n_rows x n_cols` buffer as a matrix.
fn matrix_arg(x: *const f64, n_rows: usize, n_cols: usize) -> Result<DMatrix<f64>, Failure> {
    if n_rows == 0 || n_cols == 0 {
        return Ok(DMatrix::zeros(n_rows, n_cols));
    }
    if x.is_null() {
        return Err(Failure::Null("input matrix"));
    }
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Error::InvalidArgument("matrix size overflows".into()))?;
    // SAFETY: caller guarantees `len` readable doubles.
    let data = unsafe { std::slice::from_raw_parts(x, len) };
    Ok(DMatrix::from_row_slice(n_rows, n_cols, data))
}

fn out_slice<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: caller guarantees `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Compute the first `n_basis` scaled eigenfunctions on a `grid_size` grid.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bss_basis_create(n_basis: usize, grid_size: usize, out: *mut *mut BssBasis) -> BssStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let bs = bssanova::kl_decompose(n_basis, grid_size)?;
        *slot = Box::into_raw(Box::new(BssBasis(bs)));
        Ok(())
    })
}

/// Number of functions held by `basis` (0 for null).
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bss_basis_len(basis: *const BssBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.n_basis())
}

/// Evaluate function `k` (1-based) at `x`; `x` is clamped to [0, 1].
///
/// # Safety
/// `basis` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bss_basis_eval(basis: *const BssBasis, k: usize, x: f64, out: *mut f64) -> BssStatus {
    guard(|| {
        let b = non_null(basis, "basis")?;
        *out_ptr(out, "out")? = b.0.eval(k, x)?;
        Ok(())
    })
}

/// Eigenvalue `k` (1-based) of the kernel operator.
///
/// # Safety
/// `basis` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bss_basis_eigenvalue(basis: *const BssBasis, k: usize, out: *mut f64) -> BssStatus {
    guard(|| {
        let b = non_null(basis, "basis")?;
        let ev = b.0.eigenvalues();
        if k == 0 || k > ev.len() {
            return Err(Error::InvalidArgument(format!("eigenvalue index {k} outside 1..={}", ev.len())).into());
        }
        *out_ptr(out, "out")? = ev[k - 1];
        Ok(())
    })
}

/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bss_basis_free(basis: *mut BssBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Defaults matching the engine's `SelectionConfig`.
#[no_mangle]
pub extern "C" fn bss_fit_options_default() -> BssFitOptions {
    let c = SelectionConfig::default();
    let h = c.hyperparameters;
    BssFitOptions {
        criterion: match c.criterion {
            Criterion::Bic => BssCriterion::Bic,
            Criterion::Aic => BssCriterion::Aic,
        },
        tolerance: c.tolerance,
        max_interaction_order: c.max_interaction_order,
        max_stage: c.max_stage,
        a: h.a,
        b: h.b,
        a_tau: h.a_tau,
        b_tau: h.b_tau,
        n_draws: h.n_draws,
        burn_in: h.burn_in,
        seed: h.seed,
    }
}

/// Forward-select and fit a model on row-major inputs `x` (`n_rows x n_cols`)
/// and targets `z` (`n_rows`).
///
/// # Safety
/// `x` must hold `n_rows * n_cols` doubles, `z` `n_rows` doubles, `options`
/// must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bss_model_fit(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    z: *const f64,
    options: *const BssFitOptions,
    out: *mut *mut BssModel,
) -> BssStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let opts = non_null(options, "options")?;
        let xm = matrix_arg(x, n_rows, n_cols)?;
        if n_rows > 0 && z.is_null() {
            return Err(Failure::Null("targets"));
        }
        let zs = if n_rows == 0 { &[][..] } else { std::slice::from_raw_parts(z, n_rows) };
        let selected = forward_select(&xm, zs, &opts.into())?;
        *slot = Box::into_raw(Box::new(BssModel(GpModel::from_selected(selected)?)));
        Ok(())
    })
}

/// Load a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bss_model_load(path: *const c_char, out: *mut *mut BssModel) -> BssStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let model = load_model(&path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(BssModel(model)));
        Ok(())
    })
}

/// Write `model` as JSON.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bss_model_save(model: *const BssModel, path: *const c_char) -> BssStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        save_model(&m.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Input dimension (0 for null).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bss_model_n_inputs(model: *const BssModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_inputs())
}

/// Number of terms including the intercept (0 for null).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bss_model_n_terms(model: *const BssModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_terms())
}

/// Posterior-mean prediction for row-major `x`; writes `n_rows` values.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `n_rows * n_cols` doubles
/// and `out` must have room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn bss_model_predict_mean(
    model: *const BssModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> BssStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let xm = matrix_arg(x, n_rows, n_cols)?;
        let pred = m.0.predict_mean(&xm)?;
        out_slice(out, n_rows, "out")?.copy_from_slice(&pred);
        Ok(())
    })
}

/// 95% bounds from `n_curves` evenly spaced retained draws.
///
/// # Safety
/// As for [`bss_model_predict_mean`], with `lower` and `upper` each holding
/// `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn bss_model_predict_bounds(
    model: *const BssModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    n_curves: usize,
    lower: *mut f64,
    upper: *mut f64,
) -> BssStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let xm = matrix_arg(x, n_rows, n_cols)?;
        let pred = m.0.predict_draws(&xm, n_curves)?;
        out_slice(lower, n_rows, "lower")?.copy_from_slice(&pred.lower);
        out_slice(upper, n_rows, "upper")?.copy_from_slice(&pred.upper);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bss_model_free(model: *mut BssModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
