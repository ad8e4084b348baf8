//! C ABI for cosify.
//!
//! Objects are opaque handles created by `*_new` / `*_run` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CosifyStatus`]; on failure the message is kept per thread and can be
//! read with [`cosify_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cosify::cftp::{sample_site, CftpOptions};
use cosify::cosiness::{meeting_lower_bound, meeting_probability};
use cosify::pca::EpsilonParams;
use cosify::percolation::{survival_estimate, Direction, SurvivalCurve};
use cosify::{Error, GroupSpec, NoiseField};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CosifyStatus {
    Ok = 0,
    NullPointer = 1,
    /// A parameter violates a documented precondition.
    Usage = 2,
    /// A size or depth limit was exceeded.
    Resource = 3,
    /// An internal invariant failed; the result is not trustworthy.
    Invariant = 4,
    Io = 5,
    Config = 6,
    Panic = 7,
    /// The search hit its depth cap before producing a value.
    Truncated = 8,
}

/// Noisy automaton over a finite abelian group with error rate epsilon.
pub struct CosifyModel {
    params: EpsilonParams,
}

/// Survival curve of oriented percolation from the origin.
pub struct CosifySurvival {
    curve: SurvivalCurve,
}

/// Monte Carlo estimate of the coupling meeting probability.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CosifyMeeting {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub exact_lower_bound: f64,
    pub replicas: u64,
    pub successes: u64,
    pub target_hits: u64,
    pub implication_violations: u64,
}

/// A stationary value produced by coupling from the past.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CosifySample {
    /// Symbol index in mixed radix over the group factors.
    pub value: u32,
    /// Greatest level from which no open path reaches the site.
    pub horizon: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CosifyStatus {
    match e {
        Error::Usage { .. } => CosifyStatus::Usage,
        Error::Resource { .. } => CosifyStatus::Resource,
        Error::Invariant { .. } => CosifyStatus::Invariant,
        Error::Io { .. } => CosifyStatus::Io,
        Error::Config(_) => CosifyStatus::Config,
    }
}

fn guard(body: impl FnOnce() -> Result<(), (CosifyStatus, String)>) -> CosifyStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CosifyStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside cosify".to_owned());
            CosifyStatus::Panic
        }
    }
}

fn lib<T>(r: cosify::Result<T>) -> Result<T, (CosifyStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CosifyStatus, String) {
    (CosifyStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const CosifyModel) -> Result<&'a CosifyModel, (CosifyStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (CosifyStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cosify_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// nul-terminated) and returns its full length, or 0 if there is none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn cosify_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Creates a model over the group `Z/f_0 x ... x Z/f_{n-1}`.
///
/// # Safety
/// `factors` must point to `n_factors` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_model_new(
    factors: *const u32,
    n_factors: usize,
    epsilon: f64,
    out: *mut *mut CosifyModel,
) -> CosifyStatus {
    guard(|| {
        if factors.is_null() {
            return Err(null("factors"));
        }
        let group = lib(GroupSpec::new(std::slice::from_raw_parts(factors, n_factors).to_vec()))?;
        let params = lib(EpsilonParams::new(group, epsilon))?;
        write(out, Box::into_raw(Box::new(CosifyModel { params })))
    })
}

/// # Safety
/// `model` must come from [`cosify_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cosify_model_free(model: *mut CosifyModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Normalized error rate `epsilon |A| / (|A| - 1)`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_model_epsilon_tilde(model: *const CosifyModel, out: *mut f64) -> CosifyStatus {
    guard(|| write(out, model_ref(model)?.params.epst))
}

/// Exact lower bound on the probability that the coupling started at `n0`
/// meets on `[-k, k]` by time 0.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_meeting_lower_bound(
    model: *const CosifyModel,
    k: i64,
    n0: i64,
    out: *mut f64,
) -> CosifyStatus {
    guard(|| {
        let m = model_ref(model)?;
        if k < 0 || n0 > -1 {
            return Err((CosifyStatus::Usage, "need k >= 0 and n0 <= -1".to_owned()));
        }
        write(out, meeting_lower_bound(&m.params, k, n0))
    })
}

/// Monte Carlo estimate of the meeting probability over `replicas` seeded
/// noise fields.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_meeting_estimate(
    model: *const CosifyModel,
    k: i64,
    n0: i64,
    replicas: u64,
    seed: u64,
    out: *mut CosifyMeeting,
) -> CosifyStatus {
    guard(|| {
        let m = model_ref(model)?;
        if replicas == 0 {
            return Err((CosifyStatus::Usage, "at least one replica is required".to_owned()));
        }
        let e = lib(meeting_probability(&m.params, k, n0, replicas, seed))?;
        write(
            out,
            CosifyMeeting {
                estimate: e.estimate,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                exact_lower_bound: e.exact_lower_bound,
                replicas: e.replicas,
                successes: e.successes,
                target_hits: e.target_hits,
                implication_violations: e.implication_violations,
            },
        )
    })
}

/// Stationary value at site `(n, i)` of the noise field with `seed`, by
/// coupling from the past. Returns `Truncated` if no horizon is found
/// within `depth_cap` levels.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_cftp_sample(
    model: *const CosifyModel,
    n: i64,
    i: i64,
    seed: u64,
    depth_cap: u64,
    out: *mut CosifySample,
) -> CosifyStatus {
    guard(|| {
        let m = model_ref(model)?;
        lib(cosify::cftp::check_subcritical(&m.params, false))?;
        let opts = CftpOptions {
            depth_cap,
            ..CftpOptions::default()
        };
        let s = lib(sample_site(&m.params, n, i, &NoiseField::new(seed), opts))?;
        match (s.value, s.horizon.level()) {
            (Some(value), Some(horizon)) => write(out, CosifySample { value, horizon }),
            _ => Err((
                CosifyStatus::Truncated,
                format!("no horizon within {depth_cap} levels of ({n}, {i})"),
            )),
        }
    })
}

/// Survival of oriented site percolation with open probability `p` from
/// the origin on a torus of `width`, over `replicas` fields.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_survival_run(
    p: f64,
    depth: u64,
    width: usize,
    replicas: u64,
    seed: u64,
    backward: bool,
    out: *mut *mut CosifySurvival,
) -> CosifyStatus {
    guard(|| {
        let direction = if backward {
            Direction::Backward
        } else {
            Direction::Forward
        };
        let curve = lib(survival_estimate(p, depth, width, replicas, seed, direction))?;
        write(out, Box::into_raw(Box::new(CosifySurvival { curve })))
    })
}

/// Fraction of replicas whose open path spans `d` levels, `d <= depth`.
///
/// # Safety
/// `survival` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_survival_at(survival: *const CosifySurvival, d: u64, out: *mut f64) -> CosifyStatus {
    guard(|| {
        let s = survival.as_ref().ok_or_else(|| null("survival"))?;
        if d > s.curve.depth {
            return Err((CosifyStatus::Usage, format!("depth {d} exceeds {}", s.curve.depth)));
        }
        write(out, s.curve.survival(d as usize))
    })
}

/// 95% Wilson interval of the survival probability at full depth.
///
/// # Safety
/// `survival` must be a live handle; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosify_survival_interval(
    survival: *const CosifySurvival,
    lo: *mut f64,
    hi: *mut f64,
) -> CosifyStatus {
    guard(|| {
        let s = survival.as_ref().ok_or_else(|| null("survival"))?;
        let (a, b) = s.curve.interval();
        write(lo, a)?;
        write(hi, b)
    })
}

/// # Safety
/// `survival` must come from [`cosify_survival_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cosify_survival_free(survival: *mut CosifySurvival) {
    if !survival.is_null() {
        drop(Box::from_raw(survival));
    }
}
