//! C ABI over the segmentation engine.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `rshdp_fit` and released by the matching `*_free`. Every fallible call
//! returns an `RshdpStatus`; on failure the message is kept per thread and
//! can be copied out with `rshdp_last_error`. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rshdp_core::bench::evaluate;
use rshdp_core::config::RunConfig;
use rshdp_core::kernels::RngStream;
use rshdp_core::samplers::{run_chain, ChainOutput, Prepared};
use rshdp_core::{Error, ObservationSequence};

/// Status codes. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RshdpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Verification = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

/// Observation sequence of `len` rows with `dim` columns.
pub struct RshdpSequence(ObservationSequence);

/// Run configuration (model, sampler, priors, iterations, seed).
pub struct RshdpConfig(RunConfig);

/// Result of one fitted chain.
pub struct RshdpRun(ChainOutput);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RshdpStatus {
    match e {
        Error::Config(_) | Error::Input(_) => RshdpStatus::Config,
        Error::Verification(_) => RshdpStatus::Verification,
        Error::Numerical(_) | Error::Degenerate(_) => RshdpStatus::Numerical,
        Error::Internal(_) => RshdpStatus::Internal,
        _ => RshdpStatus::Data,
    }
}

struct Fail(RshdpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RshdpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RshdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RshdpStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RshdpStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RshdpStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a, T>(p: *mut T, cap: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if cap < need {
        return Err(Fail(
            RshdpStatus::BufferTooSmall,
            format!("{what} holds {cap} entries but {need} are needed"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rshdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit). Returns the full message length in bytes, excluding the
/// terminator; an empty message means the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rshdp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build a sequence from `len * dim` row-major values.
///
/// # Safety
/// `values` must point to `len * dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rshdp_sequence_new(
    values: *const f64,
    len: usize,
    dim: usize,
    out: *mut *mut RshdpSequence,
) -> RshdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let n = len
            .checked_mul(dim)
            .ok_or_else(|| Fail(RshdpStatus::Data, "len * dim overflows".into()))?;
        let v = slice(values, n, "values")?;
        let seq = ObservationSequence::new(dim, v.to_vec())?;
        *out = Box::into_raw(Box::new(RshdpSequence(seq)));
        Ok(())
    })
}

/// # Safety
/// `seq` must be null or a handle from `rshdp_sequence_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rshdp_sequence_free(seq: *mut RshdpSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `seq` must be null or a live sequence handle.
#[no_mangle]
pub unsafe extern "C" fn rshdp_sequence_len(seq: *const RshdpSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.len())
}

/// Configuration holding every default.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rshdp_config_new(out: *mut *mut RshdpConfig) -> RshdpStatus {
    guard(|| put(out, Box::into_raw(Box::new(RshdpConfig(RunConfig::default()))), "out"))
}

/// # Safety
/// `cfg` must be null or a handle from `rshdp_config_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rshdp_config_free(cfg: *mut RshdpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Set one dotted key, e.g. "priors.alpha.shape" to "2".
///
/// # Safety
/// `cfg` must be a live config handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rshdp_config_set(cfg: *mut RshdpConfig, key: *const c_char, value: *const c_char) -> RshdpStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.set(cstr(key, "key")?, cstr(value, "value")?)?;
        Ok(())
    })
}

/// Apply a TOML document of dotted keys.
///
/// # Safety
/// `cfg` must be a live config handle; `text` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rshdp_config_apply_toml(cfg: *mut RshdpConfig, text: *const c_char) -> RshdpStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.apply_toml(cstr(text, "text")?)?;
        Ok(())
    })
}

/// Run one chain. Draws come from RNG stream 1 of the configured seed, so the
/// result equals the first chain of the command-line `fit`.
///
/// # Safety
/// `cfg` and `seq` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rshdp_fit(cfg: *const RshdpConfig, seq: *const RshdpSequence, out: *mut *mut RshdpRun) -> RshdpStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.0;
        let seq = &seq.as_ref().ok_or_else(|| null("seq"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = cfg.model(seq)?;
        let data = Prepared::new(&model, seq.clone())?;
        let run = run_chain(&model, &data, cfg.chain_settings(), RngStream::new(cfg.seed, 1))?;
        *out = Box::into_raw(Box::new(RshdpRun(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from `rshdp_fit` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rshdp_run_free(run: *mut RshdpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of timesteps in the modal state sequence, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn rshdp_run_len(run: *const RshdpRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.modal.len())
}

/// Number of sweeps in the trace, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn rshdp_run_sweeps(run: *const RshdpRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Copy the modal state sequence into `states` (capacity `cap`).
///
/// # Safety
/// `run` must be a live run handle; `states` must point to `cap` writable entries.
#[no_mangle]
pub unsafe extern "C" fn rshdp_run_modal_states(run: *const RshdpRun, states: *mut usize, cap: usize) -> RshdpStatus {
    guard(|| {
        let run = &run.as_ref().ok_or_else(|| null("run"))?.0;
        out_slice(states, cap, run.modal.len(), "states")?.copy_from_slice(&run.modal);
        Ok(())
    })
}

/// Copy per-sweep joint log-likelihoods and occupied-state counts.
/// Either output may be null to skip it.
///
/// # Safety
/// `run` must be a live run handle; non-null outputs must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn rshdp_run_trace(run: *const RshdpRun, joint_loglik: *mut f64, n_states: *mut usize, cap: usize) -> RshdpStatus {
    guard(|| {
        let run = &run.as_ref().ok_or_else(|| null("run"))?.0;
        let n = run.trace.len();
        if !joint_loglik.is_null() {
            let ll = out_slice(joint_loglik, cap, n, "joint_loglik")?;
            for (o, d) in ll.iter_mut().zip(&run.trace) {
                *o = d.joint_loglik;
            }
        }
        if !n_states.is_null() {
            let ns = out_slice(n_states, cap, n, "n_states")?;
            for (o, d) in ns.iter_mut().zip(&run.trace) {
                *o = d.n_states_used;
            }
        }
        Ok(())
    })
}

/// Accuracy and support-weighted F1 after optimal label matching.
///
/// # Safety
/// `predicted` and `truth` must point to `len` readable entries; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rshdp_evaluate(
    predicted: *const usize,
    truth: *const usize,
    len: usize,
    accuracy: *mut f64,
    weighted_f1: *mut f64,
) -> RshdpStatus {
    guard(|| {
        let p = slice(predicted, len, "predicted")?;
        let t = slice(truth, len, "truth")?;
        let s = evaluate(p, t);
        put(accuracy, s.accuracy, "accuracy")?;
        put(weighted_f1, s.weighted_f1, "weighted_f1")
    })
}
