//! C ABI over the qcorr simulator.
//!
//! Every fallible call returns a [`QcorrStatus`]; on anything but `Ok` the
//! message is available from [`qcorr_last_error`] on the same thread. Handles
//! are opaque and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qcorr::regimes::{evaluate, RegimeInputs};
use qcorr::simulation::{run_ensemble, EnsembleRecord};
use qcorr::{RegimeLabel, SimConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcorrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Simulation = 4,
    OutOfRange = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcorrRegime {
    UncertaintyDominated = 0,
    Wavelike = 1,
    Semiclassical = 2,
    Indeterminate = 3,
}

impl From<RegimeLabel> for QcorrRegime {
    fn from(l: RegimeLabel) -> Self {
        match l {
            RegimeLabel::UncertaintyDominated => QcorrRegime::UncertaintyDominated,
            RegimeLabel::Wavelike => QcorrRegime::Wavelike,
            RegimeLabel::Semiclassical => QcorrRegime::Semiclassical,
            RegimeLabel::Indeterminate => QcorrRegime::Indeterminate,
        }
    }
}

/// One measurement: sampled quantum point and the classical reference at `t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QcorrSample {
    pub t: f64,
    pub x_quantum: f64,
    pub p_quantum: f64,
    pub x_classical: f64,
    pub p_classical: f64,
}

/// A left-hand side is meaningful only when its `has_` flag is set.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcorrRegimeReport {
    pub uncertainty: f64,
    pub has_uncertainty: bool,
    pub wavelike: f64,
    pub has_wavelike: bool,
    pub label: QcorrRegime,
}

/// Mutable simulation parameters, validated when a run starts.
pub struct QcorrConfig {
    inner: SimConfig,
}

/// Finished ensemble run.
pub struct QcorrEnsemble {
    inner: EnsembleRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: QcorrStatus, msg: impl Into<String>) -> QcorrStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> QcorrStatus) -> QcorrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(QcorrStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, QcorrStatus> {
    if s.is_null() {
        return Err(fail(QcorrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(QcorrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! deref {
    ($p:expr, $what:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(QcorrStatus::NullPointer, concat!($what, " is null")),
        }
    };
    (mut $p:expr, $what:literal) => {
        match $p.as_mut() {
            Some(v) => v,
            None => return fail(QcorrStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qcorr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qcorr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// New config holding the defaults.
#[no_mangle]
pub extern "C" fn qcorr_config_new() -> *mut QcorrConfig {
    Box::into_raw(Box::new(QcorrConfig {
        inner: SimConfig::default(),
    }))
}

/// Parses `key = value` lines (the config-file format) into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_config_parse(text: *const c_char, out: *mut *mut QcorrConfig) -> QcorrStatus {
    guard(|| {
        let out = deref!(mut out, "out");
        *out = ptr::null_mut();
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match SimConfig::parse_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QcorrConfig { inner }));
                QcorrStatus::Ok
            }
            Err(e) => fail(QcorrStatus::Config, e.to_string()),
        }
    })
}

/// Sets one key, with the same names and syntax as the config file.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qcorr_config_set(
    config: *mut QcorrConfig,
    key: *const c_char,
    value: *const c_char,
) -> QcorrStatus {
    guard(|| {
        let config = deref!(mut config, "config");
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match config.inner.set(key, value) {
            Ok(()) => QcorrStatus::Ok,
            Err(e) => fail(QcorrStatus::Config, e.to_string()),
        }
    })
}

/// Checks every field without running anything.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qcorr_config_validate(config: *const QcorrConfig) -> QcorrStatus {
    guard(|| {
        let config = deref!(config, "config");
        match config.inner.clone().validate() {
            Ok(_) => QcorrStatus::Ok,
            Err(e) => fail(QcorrStatus::Config, e.to_string()),
        }
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn qcorr_config_free(config: *mut QcorrConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Both regime left-hand sides and the label for the config's parameters.
///
/// # Safety
/// `config` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_regimes(config: *const QcorrConfig, out: *mut QcorrRegimeReport) -> QcorrStatus {
    guard(|| {
        let config = deref!(config, "config");
        let out = deref!(mut out, "out");
        let cfg = match config.inner.clone().validate() {
            Ok(c) => c,
            Err(e) => return fail(QcorrStatus::Config, e.to_string()),
        };
        let r = evaluate(&RegimeInputs::from_config(&cfg), cfg.config().regime_tolerance);
        *out = QcorrRegimeReport {
            uncertainty: r.uncertainty.unwrap_or(f64::NAN),
            has_uncertainty: r.uncertainty.is_some(),
            wavelike: r.wavelike.unwrap_or(f64::NAN),
            has_wavelike: r.wavelike.is_some(),
            label: r.label.into(),
        };
        QcorrStatus::Ok
    })
}

/// Runs the configured ensemble to completion. Blocks the calling thread.
///
/// # Safety
/// `config` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_run_ensemble(config: *const QcorrConfig, out: *mut *mut QcorrEnsemble) -> QcorrStatus {
    guard(|| {
        let config = deref!(config, "config");
        let out = deref!(mut out, "out");
        *out = ptr::null_mut();
        let cfg = match config.inner.clone().validate() {
            Ok(c) => c,
            Err(e) => return fail(QcorrStatus::Config, e.to_string()),
        };
        match run_ensemble(&cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QcorrEnsemble { inner }));
                QcorrStatus::Ok
            }
            Err(e) => fail(QcorrStatus::Simulation, e.to_string()),
        }
    })
}

/// # Safety
/// `ensemble` must come from this library and not be used afterwards. NULL
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn qcorr_ensemble_free(ensemble: *mut QcorrEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Number of member runs, or 0 for NULL.
///
/// # Safety
/// `ensemble` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn qcorr_ensemble_run_count(ensemble: *const QcorrEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.inner.runs.len())
}

/// Mean divergence time; `censored` is set when some run never crossed and
/// was counted at `t_max`.
///
/// # Safety
/// `ensemble` must come from this library; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_ensemble_divergence(
    ensemble: *const QcorrEnsemble,
    time: *mut f64,
    censored: *mut bool,
) -> QcorrStatus {
    let e = deref!(ensemble, "ensemble");
    let time = deref!(mut time, "time");
    let censored = deref!(mut censored, "censored");
    *time = e.inner.mean_divergence_time;
    *censored = e.inner.censored;
    QcorrStatus::Ok
}

/// Number of measurements recorded for member `run`.
///
/// # Safety
/// `ensemble` must come from this library; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_ensemble_sample_count(
    ensemble: *const QcorrEnsemble,
    run: usize,
    count: *mut usize,
) -> QcorrStatus {
    let e = deref!(ensemble, "ensemble");
    let count = deref!(mut count, "count");
    match e.inner.runs.get(run) {
        Some(r) => {
            *count = r.quantum.len();
            QcorrStatus::Ok
        }
        None => fail(QcorrStatus::OutOfRange, format!("run {run} of {}", e.inner.runs.len())),
    }
}

/// Copies up to `capacity` samples of member `run` into `buf` and stores the
/// number written in `written`.
///
/// # Safety
/// `ensemble` must come from this library; `buf` must hold `capacity`
/// elements; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_ensemble_samples(
    ensemble: *const QcorrEnsemble,
    run: usize,
    buf: *mut QcorrSample,
    capacity: usize,
    written: *mut usize,
) -> QcorrStatus {
    let e = deref!(ensemble, "ensemble");
    let written = deref!(mut written, "written");
    *written = 0;
    let Some(r) = e.inner.runs.get(run) else {
        return fail(QcorrStatus::OutOfRange, format!("run {run} of {}", e.inner.runs.len()));
    };
    if buf.is_null() && capacity > 0 {
        return fail(QcorrStatus::NullPointer, "buf is null");
    }
    let n = capacity.min(r.quantum.len());
    for (k, ((t, q), c)) in r.quantum.iter().zip(&r.classical).take(n).enumerate() {
        buf.add(k).write(QcorrSample {
            t: *t,
            x_quantum: q.x,
            p_quantum: q.p,
            x_classical: c.x,
            p_classical: c.p,
        });
    }
    *written = n;
    QcorrStatus::Ok
}

/// Crossing time of member `run`; `diverged` is false (and `time` NaN) if it
/// never crossed the threshold.
///
/// # Safety
/// `ensemble` must come from this library; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcorr_run_divergence_time(
    ensemble: *const QcorrEnsemble,
    run: usize,
    time: *mut f64,
    diverged: *mut bool,
) -> QcorrStatus {
    let e = deref!(ensemble, "ensemble");
    let time = deref!(mut time, "time");
    let diverged = deref!(mut diverged, "diverged");
    let Some(r) = e.inner.runs.get(run) else {
        return fail(QcorrStatus::OutOfRange, format!("run {run} of {}", e.inner.runs.len()));
    };
    *diverged = r.divergence_time.is_some();
    *time = r.divergence_time.unwrap_or(f64::NAN);
    QcorrStatus::Ok
}
