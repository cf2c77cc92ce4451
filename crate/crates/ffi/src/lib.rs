//! C ABI for `robandit`.
//!
//! Every fallible function returns an [`RbStatus`]. On failure the message for the
//! calling thread is available from [`rb_last_error_message`] until that thread's
//! next failing call. Matrices are passed row-major. Objects are opaque handles
//! created by `*_new`/`*_compute` and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use robandit::design::{ActionSet, ClientModel, Design};
use robandit::harness::{self, ExperimentConfig, SweepOptions};
use robandit::nalgebra::{DMatrix, DVector};
use robandit::policy::{threshold_m1_at, threshold_m2_at, ThresholdConfig};
use robandit::privacy::{laplace_quantile, PrivacyParams};
use robandit::rng::SeedTree;
use robandit::robust::{self, RobustOptions};
use robandit::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    InvalidInput = 1,
    FailsToConverge = 2,
    OutOfSpan = 3,
    SingularGram = 4,
    TooManyRemoved = 5,
    InvalidNu = 6,
    ConfigInvalid = 7,
    CheckpointOutOfRange = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

/// Client model selector for coreset construction and thresholds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbClientModel {
    M1 = 1,
    M2 = 2,
}

impl From<RbClientModel> for ClientModel {
    fn from(m: RbClientModel) -> Self {
        match m {
            RbClientModel::M1 => ClientModel::M1,
            RbClientModel::M2 => ClientModel::M2,
        }
    }
}

/// Opaque finite action set.
pub struct RbActionSet(ActionSet);

/// Opaque approximate G-optimal design over an action set.
pub struct RbDesign {
    design: Design,
    arms: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RbStatus {
    match e {
        Error::InvalidInput(_) => RbStatus::InvalidInput,
        Error::FailsToConverge { .. } => RbStatus::FailsToConverge,
        Error::OutOfSpan { .. } => RbStatus::OutOfSpan,
        Error::SingularGram => RbStatus::SingularGram,
        Error::TooManyRemoved { .. } => RbStatus::TooManyRemoved,
        Error::InvalidNu(_) => RbStatus::InvalidNu,
        Error::ConfigInvalid { .. } => RbStatus::ConfigInvalid,
        Error::CheckpointOutOfRange { .. } => RbStatus::CheckpointOutOfRange,
        Error::Io(_) => RbStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            RbStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            RbStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` is null only when `len == 0`; otherwise it points to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// As [`slice`], for writable memory.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    nonnull(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn rows(data: &[f64], count: usize, dim: usize) -> Vec<DVector<f64>> {
    data.chunks(dim.max(1)).take(count).map(DVector::from_row_slice).collect()
}

fn checked_len(count: usize, dim: usize) -> Result<usize, Failure> {
    count
        .checked_mul(dim)
        .ok_or_else(|| Failure::Core(Error::InvalidInput("matrix size overflows".into())))
}

/// Message describing the last failure on this thread, or null if there was none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an action set from `count` rows of `dim` values.
///
/// # Safety
/// `data` points to `count * dim` doubles; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_action_set_new(
    data: *const f64,
    count: usize,
    dim: usize,
    out: *mut *mut RbActionSet,
) -> RbStatus {
    guard(|| {
        nonnull(out, "out")?;
        let values = slice(data, checked_len(count, dim)?, "data")?;
        let set = ActionSet::new(dim, rows(values, count, dim))?;
        *out = Box::into_raw(Box::new(RbActionSet(set)));
        Ok(())
    })
}

/// # Safety
/// `set` is null or a handle from [`rb_action_set_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_action_set_free(set: *mut RbActionSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `set` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_action_set_len(set: *const RbActionSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Ambient dimension, or 0 for a null handle.
///
/// # Safety
/// `set` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_action_set_dim(set: *const RbActionSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.dim())
}

/// Computes an approximate G-optimal design over `set`.
///
/// # Safety
/// `set` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_design_compute(
    set: *const RbActionSet,
    tol: f64,
    max_iters: usize,
    out: *mut *mut RbDesign,
) -> RbStatus {
    guard(|| {
        nonnull(set, "set")?;
        nonnull(out, "out")?;
        let set = &(*set).0;
        let design = robandit::compute_design(set, tol, max_iters)?;
        *out = Box::into_raw(Box::new(RbDesign { design, arms: set.len() }));
        Ok(())
    })
}

/// # Safety
/// `design` is null or a handle from [`rb_design_compute`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_design_free(design: *mut RbDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// `max_a ||a||^2_{M(pi)^+}`, or NaN for a null handle.
///
/// # Safety
/// `design` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_design_gvalue(design: *const RbDesign) -> f64 {
    design.as_ref().map_or(f64::NAN, |d| d.design.gvalue)
}

/// Rank of the span of the actions, or 0 for a null handle.
///
/// # Safety
/// `design` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_design_effective_dim(design: *const RbDesign) -> usize {
    design.as_ref().map_or(0, |d| d.design.effective_dim)
}

/// Number of actions with positive weight, or 0 for a null handle.
///
/// # Safety
/// `design` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_design_support_len(design: *const RbDesign) -> usize {
    design.as_ref().map_or(0, |d| d.design.support_len())
}

/// Writes the weight of every action (zero off the support) into `out[0..len]`;
/// `len` must equal the number of actions.
///
/// # Safety
/// `design` is a live handle; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rb_design_weights(design: *const RbDesign, out: *mut f64, len: usize) -> RbStatus {
    guard(|| {
        nonnull(design, "design")?;
        let d = &*design;
        if len != d.arms {
            return Err(Error::InvalidInput(format!("buffer holds {len} weights, design has {}", d.arms)).into());
        }
        let out = slice_mut(out, len, "out")?;
        for (i, w) in out.iter_mut().enumerate() {
            *w = d.design.weight(i);
        }
        Ok(())
    })
}

/// Rounds the design into per-action play counts for round budget `budget`
/// (zero off the support); `len` must equal the number of actions. `nu` is only
/// read under M2.
///
/// # Safety
/// `design` is a live handle; `out` points to `len` writable integers.
#[no_mangle]
pub unsafe extern "C" fn rb_design_coreset_counts(
    design: *const RbDesign,
    budget: u64,
    model: RbClientModel,
    nu: f64,
    out: *mut u64,
    len: usize,
) -> RbStatus {
    guard(|| {
        nonnull(design, "design")?;
        let d = &*design;
        if len != d.arms {
            return Err(Error::InvalidInput(format!("buffer holds {len} counts, design has {}", d.arms)).into());
        }
        let coreset = robandit::build_coreset(&d.design, budget, model.into(), nu)?;
        let out = slice_mut(out, len, "out")?;
        out.fill(0);
        for &(i, n) in &coreset.entries {
            out[i] = n;
        }
        Ok(())
    })
}

/// `<a, M^+ a>` for a `dim`-vector `a` and a row-major `dim x dim` Gram matrix.
///
/// # Safety
/// `a` holds `dim` doubles, `gram` holds `dim * dim`, `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn rb_weighted_norm_sq(a: *const f64, gram: *const f64, dim: usize, out: *mut f64) -> RbStatus {
    guard(|| {
        nonnull(out, "out")?;
        let a = DVector::from_row_slice(slice(a, dim, "a")?);
        let g = DMatrix::from_row_slice(dim, dim, slice(gram, checked_len(dim, dim)?, "gram")?);
        *out = robandit::weighted_norm_sq(&a, &g)?;
        Ok(())
    })
}

/// Spectral filter over `n` points of dimension `p` with threshold `lambda`.
/// Writes the mean estimate to `out_mean[0..p]` and the number of removed
/// points to `out_removed` (may be null).
///
/// # Safety
/// `points` holds `n * p` doubles, `out_mean` has room for `p`.
#[no_mangle]
pub unsafe extern "C" fn rb_filter(
    points: *const f64,
    n: usize,
    p: usize,
    lambda: f64,
    seed: u64,
    out_mean: *mut f64,
    out_removed: *mut usize,
) -> RbStatus {
    guard(|| {
        let pts = rows(slice(points, checked_len(n, p)?, "points")?, n, p);
        let mut rng = SeedTree::new(seed).rng(0);
        let (mean, diag) = robust::filter(&pts, lambda, &mut rng)?;
        slice_mut(out_mean, p, "out_mean")?.copy_from_slice(mean.as_slice());
        if let Some(r) = out_removed.as_mut() {
            *r = diag.removed_count;
        }
        Ok(())
    })
}

/// Robust least squares with the default threshold rule, assuming corruption
/// rate `alpha`. `actions` is `n x d` row-major; the estimate goes to
/// `out_theta[0..d]` and the removal count to `out_removed` (may be null).
///
/// # Safety
/// Buffers hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn rb_robust_least_squares(
    actions: *const f64,
    rewards: *const f64,
    n: usize,
    d: usize,
    alpha: f64,
    seed: u64,
    out_theta: *mut f64,
    out_removed: *mut usize,
) -> RbStatus {
    guard(|| {
        let xs = rows(slice(actions, checked_len(n, d)?, "actions")?, n, d);
        let ys = slice(rewards, n, "rewards")?;
        let opts = RobustOptions {
            alpha,
            ..RobustOptions::default()
        };
        let mut rng = SeedTree::new(seed).rng(0);
        let est = robust::robust_least_squares(&xs, ys, &[], &opts, &mut rng)?;
        slice_mut(out_theta, d, "out_theta")?.copy_from_slice(est.theta.as_slice());
        if let Some(r) = out_removed.as_mut() {
            *r = est.diagnostics.removed_count;
        }
        Ok(())
    })
}

/// Ordinary least squares restricted to the span of the actions.
///
/// # Safety
/// Buffers hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn rb_vanilla_least_squares(
    actions: *const f64,
    rewards: *const f64,
    n: usize,
    d: usize,
    out_theta: *mut f64,
) -> RbStatus {
    guard(|| {
        let xs = rows(slice(actions, checked_len(n, d)?, "actions")?, n, d);
        let ys = slice(rewards, n, "rewards")?;
        let theta = robust::vanilla_least_squares(&xs, ys)?;
        slice_mut(out_theta, d, "out_theta")?.copy_from_slice(theta.as_slice());
        Ok(())
    })
}

/// Inverse CDF of the centred Laplace law with the given scale, for `u` in (0, 1).
/// Returns NaN outside that range.
#[no_mangle]
pub extern "C" fn rb_laplace_quantile(u: f64, scale: f64) -> f64 {
    if !(u > 0.0 && u < 1.0) || !(scale >= 0.0) {
        return f64::NAN;
    }
    laplace_quantile(u, scale)
}

fn privacy_of(epsilon: f64) -> Result<PrivacyParams, Error> {
    if epsilon > 0.0 {
        PrivacyParams::new(epsilon)
    } else {
        Ok(PrivacyParams::disabled())
    }
}

/// M1 elimination threshold at batch scale `qi`; `epsilon <= 0` disables privacy.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_threshold_m1(
    qi: f64,
    d: usize,
    c_gamma: f64,
    delta: f64,
    alpha: f64,
    epsilon: f64,
    out: *mut f64,
) -> RbStatus {
    guard(|| {
        nonnull(out, "out")?;
        let cfg = ThresholdConfig {
            c_gamma,
            delta,
            alpha,
            ..ThresholdConfig::default()
        };
        cfg.validate()?;
        *out = threshold_m1_at(qi, &cfg, d, &privacy_of(epsilon)?);
        Ok(())
    })
}

/// M2 elimination threshold for round budget `m` and support size `k`;
/// `epsilon <= 0` disables privacy.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_threshold_m2(
    m: f64,
    d: usize,
    k: usize,
    nu: f64,
    c_gamma: f64,
    delta: f64,
    alpha: f64,
    epsilon: f64,
    out: *mut f64,
) -> RbStatus {
    guard(|| {
        nonnull(out, "out")?;
        let cfg = ThresholdConfig {
            c_gamma,
            delta,
            alpha,
            nu,
            model: ClientModel::M2,
            ..ThresholdConfig::default()
        };
        cfg.validate()?;
        *out = threshold_m2_at(m, &cfg, d, k, &privacy_of(epsilon)?);
        Ok(())
    })
}

/// Runs a sweep described by a JSON configuration and writes its output
/// directory. `workers == 0` uses one thread per core. On success
/// `out_summary_csv` (may be null) receives the summary table as CSV, to be
/// released with [`rb_string_free`]. Relative instance paths resolve against the
/// working directory.
///
/// # Safety
/// `config_json` and `out_dir` are NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn rb_run_sweep_json(
    config_json: *const c_char,
    out_dir: *const c_char,
    workers: usize,
    resume: bool,
    out_summary_csv: *mut *mut c_char,
) -> RbStatus {
    guard(|| {
        nonnull(config_json, "config_json")?;
        nonnull(out_dir, "out_dir")?;
        let utf8 = |p: *const c_char, what: &str| {
            CStr::from_ptr(p)
                .to_str()
                .map_err(|_| Error::InvalidInput(format!("{what} is not valid UTF-8")))
        };
        let cfg = ExperimentConfig::from_json(utf8(config_json, "config_json")?, None)?;
        let opts = SweepOptions {
            out_dir: PathBuf::from(utf8(out_dir, "out_dir")?),
            workers: (workers > 0).then_some(workers),
            resume,
        };
        let result = harness::run_sweep(&cfg, &opts)?;
        if let Some(slot) = out_summary_csv.as_mut() {
            let csv = CString::new(result.summary.to_csv()).map_err(|e| Error::InvalidInput(e.to_string()))?;
            *slot = csv.into_raw();
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` is null or a string produced by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
