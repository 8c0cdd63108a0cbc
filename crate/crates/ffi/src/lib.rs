//! C ABI for the onlad detector, the fixed-point core emulator and the cost
//! model.
//!
//! Every fallible function returns an [`OnladStatus`]; on failure a message
//! is available from [`onlad_last_error_message`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use onlad::coremodel::{CoreState, Packet};
use onlad::model_io::{load_model, save_model};
use onlad::{Activation, DetectorConfig, Error, InitRange, Matrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnladStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotInitialized = 4,
    SingularMatrix = 5,
    InitTooSmall = 6,
    IndexOverflow = 7,
    Io = 8,
    Parse = 9,
    SingleClass = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnladActivation {
    Identity = 0,
    Sigmoid = 1,
}

impl From<OnladActivation> for Activation {
    fn from(a: OnladActivation) -> Self {
        match a {
            OnladActivation::Identity => Activation::Identity,
            OnladActivation::Sigmoid => Activation::Sigmoid,
        }
    }
}

/// Detector hyperparameters. Use [`onlad_detector_config_default`] and
/// override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnladDetectorConfig {
    pub hidden: usize,
    pub activation: OnladActivation,
    pub init_low: f64,
    pub init_high: f64,
    pub ff: f64,
    pub epsilon: f64,
    /// Anomaly threshold; `INFINITY` disables flagging.
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OnladStepResult {
    /// Score before training; NaN when the stability guard skipped the sample.
    pub score: f64,
    pub is_anomaly: bool,
    pub trained: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OnladCostReport {
    pub s_parameter: u64,
    pub s_input: u64,
    pub s_train: u64,
    pub s_predict: u64,
    pub s_onlad: u64,
    pub i_train: u64,
    pub i_predict: u64,
    pub i_batch_k: u64,
    pub i_batch_1: u64,
}

/// Opaque detector handle.
pub struct OnladDetector {
    inner: onlad::OnladDetector,
}

/// Opaque fixed-point core handle.
pub struct OnladCore {
    inner: CoreState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> OnladStatus {
    match err {
        Error::DimensionMismatch { .. } => OnladStatus::DimensionMismatch,
        Error::SingularMatrix { .. } => OnladStatus::SingularMatrix,
        Error::NotInitialized => OnladStatus::NotInitialized,
        Error::InitTooSmall { .. } => OnladStatus::InitTooSmall,
        Error::InvalidArgument(_) | Error::InsufficientSamples { .. } => OnladStatus::InvalidArgument,
        Error::Parse { .. } | Error::Json(_) => OnladStatus::Parse,
        Error::IndexOverflow { .. } => OnladStatus::IndexOverflow,
        Error::SingleClass => OnladStatus::SingleClass,
        Error::Io(_) => OnladStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OnladStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OnladStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            OnladStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            OnladStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn onlad_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn onlad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn onlad_detector_config_default() -> OnladDetectorConfig {
    let d = DetectorConfig::default();
    OnladDetectorConfig {
        hidden: d.hidden,
        activation: OnladActivation::Sigmoid,
        init_low: d.init_range.low,
        init_high: d.init_range.high,
        ff: d.ff,
        epsilon: d.epsilon,
        theta: d.theta,
    }
}

fn detector_config(c: &OnladDetectorConfig) -> Result<DetectorConfig, Error> {
    Ok(DetectorConfig {
        hidden: c.hidden,
        activation: c.activation.into(),
        init_range: InitRange::new(c.init_low, c.init_high)?,
        ff: c.ff,
        epsilon: c.epsilon,
        theta: c.theta,
    })
}

/// Creates a detector for `n` input features.
///
/// # Safety
/// `config` must be NULL or point to a valid config; `out` must be a valid
/// pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_new(
    n: usize,
    config: *const OnladDetectorConfig,
    seed: u64,
    out: *mut *mut OnladDetector,
) -> OnladStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = match config.as_ref() {
            Some(c) => detector_config(c)?,
            None => DetectorConfig::default(),
        };
        let inner = onlad::OnladDetector::new(n, &cfg, seed)?;
        *out = Box::into_raw(Box::new(OnladDetector { inner }));
        Ok(())
    })
}

/// # Safety
/// `det` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_free(det: *mut OnladDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Batch-initialises on `rows × n` row-major normal samples.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_init(
    det: *mut OnladDetector,
    data: *const f64,
    rows: usize,
    cols: usize,
) -> OnladStatus {
    guard(|| {
        let det = mut_arg(det, "detector")?;
        let values = slice_arg(data, rows.saturating_mul(cols), "data")?;
        let x0 = Matrix::from_vec(rows, cols, values.to_vec())?;
        det.inner.init(&x0)?;
        Ok(())
    })
}

/// Anomaly score of one sample without training.
///
/// # Safety
/// `x` must point to `len` readable doubles and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_score(
    det: *const OnladDetector,
    x: *const f64,
    len: usize,
    score: *mut f64,
) -> OnladStatus {
    guard(|| {
        let det = det.as_ref().ok_or(Failure::Null("detector"))?;
        let x = slice_arg(x, len, "x")?;
        if x.len() != det.inner.n() {
            return Err(Error::DimensionMismatch {
                op: "onlad_detector_score",
                expected: det.inner.n().to_string(),
                actual: x.len().to_string(),
            }
            .into());
        }
        *mut_arg(score, "score")? = det.inner.score(x)?;
        Ok(())
    })
}

/// Scores `x` and then trains on it with the detector's forgetting factor.
///
/// # Safety
/// `x` must point to `len` readable doubles and `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_train_step(
    det: *mut OnladDetector,
    x: *const f64,
    len: usize,
    result: *mut OnladStepResult,
) -> OnladStatus {
    guard(|| {
        let det = mut_arg(det, "detector")?;
        let x = slice_arg(x, len, "x")?;
        let result = mut_arg(result, "result")?;
        let r = det.inner.train_step(x, None)?;
        *result = OnladStepResult {
            score: r.score.unwrap_or(f64::NAN),
            is_anomaly: r.is_anomaly,
            trained: r.trained.trained(),
        };
        Ok(())
    })
}

/// # Safety
/// `det` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_set_theta(det: *mut OnladDetector, theta: f64) -> OnladStatus {
    guard(|| Ok(mut_arg(det, "detector")?.inner.set_theta(theta)?))
}

/// # Safety
/// `det` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_set_ff(det: *mut OnladDetector, ff: f64) -> OnladStatus {
    guard(|| Ok(mut_arg(det, "detector")?.inner.set_default_ff(ff)?))
}

/// Writes the model to a text file.
///
/// # Safety
/// `det` must be a valid handle and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_save(det: *const OnladDetector, path: *const c_char) -> OnladStatus {
    guard(|| {
        let det = det.as_ref().ok_or(Failure::Null("detector"))?;
        save_model(det.inner.model(), path_arg(path)?)?;
        Ok(())
    })
}

/// Loads a model written by [`onlad_detector_save`]; `config` supplies ff,
/// epsilon and theta (NULL for defaults).
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string, `config` NULL or valid, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_detector_load(
    path: *const c_char,
    config: *const OnladDetectorConfig,
    out: *mut *mut OnladDetector,
) -> OnladStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = config.as_ref().copied().unwrap_or_else(|| onlad_detector_config_default());
        let model = load_model(path_arg(path)?)?;
        let inner = onlad::OnladDetector::from_model(model, cfg.epsilon, cfg.theta, cfg.ff)?;
        *out = Box::into_raw(Box::new(OnladDetector { inner }));
        Ok(())
    })
}

/// Creates a fixed-point core with `n` inputs and `hidden` hidden nodes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_core_new(n: usize, hidden: usize, out: *mut *mut OnladCore) -> OnladStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = CoreState::new(n, hidden)?;
        *out = Box::into_raw(Box::new(OnladCore { inner }));
        Ok(())
    })
}

/// # Safety
/// `core` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn onlad_core_free(core: *mut OnladCore) {
    if !core.is_null() {
        drop(Box::from_raw(core));
    }
}

/// Processes one 64-bit input packet. When the packet produces an output
/// packet, `*has_output` is set and `*output` receives its 32-bit word.
///
/// # Safety
/// `core` must be a valid handle; `output` and `has_output` writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_core_step(
    core: *mut OnladCore,
    packet: u64,
    output: *mut u32,
    has_output: *mut bool,
) -> OnladStatus {
    guard(|| {
        let core = mut_arg(core, "core")?;
        let output = mut_arg(output, "output")?;
        let has_output = mut_arg(has_output, "has_output")?;
        *has_output = false;
        if let Some(o) = core.inner.step(Packet(packet))? {
            *output = o.word();
            *has_output = true;
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_cost_report(
    n: usize,
    hidden: usize,
    m: usize,
    k: usize,
    out: *mut OnladCostReport,
) -> OnladStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let c = onlad::coremodel::cost_report(n, hidden, m, k)?;
        *out = OnladCostReport {
            s_parameter: c.s_parameter,
            s_input: c.s_input,
            s_train: c.s_train,
            s_predict: c.s_predict,
            s_onlad: c.s_onlad,
            i_train: c.i_train,
            i_predict: c.i_predict,
            i_batch_k: c.i_batch_k,
            i_batch_1: c.i_batch_1,
        };
        Ok(())
    })
}

/// ROC AUC with nonzero `labels` marking anomalies.
///
/// # Safety
/// `scores` and `labels` must point to `len` readable elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn onlad_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> OnladStatus {
    guard(|| {
        let scores = slice_arg(scores, len, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, len, "labels")?.iter().map(|&l| l != 0).collect();
        *mut_arg(out, "out")? = onlad::bench::auc(scores, &labels)?;
        Ok(())
    })
}
