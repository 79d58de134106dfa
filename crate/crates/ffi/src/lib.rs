//! C interface to `sslab`.
//!
//! Every fallible call returns an [`SslabStatus`]. On failure the message is kept
//! per thread and can be read with [`sslab_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sslab::linear_string::{self, LinearMode, LinearParams};
use sslab::platoon::{self, PlatoonParams, PlatoonRun, PlatoonState, VerifyOptions};
use sslab::signals::TimeSeries;
use sslab::string_sim::StringBound;
use sslab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SslabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    /// A small-gain or region condition fails, or a precondition is not met.
    Condition = 4,
    /// The leader input leaves the certified range.
    Uncertified = 5,
    /// Non-finite derivative during integration.
    Numeric = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SslabLinearMode {
    OneDirectional = 0,
    Bidirectional = 1,
    OneSided = 2,
}

impl From<SslabLinearMode> for LinearMode {
    fn from(m: SslabLinearMode) -> Self {
        match m {
            SslabLinearMode::OneDirectional => LinearMode::OneDirectional,
            SslabLinearMode::Bidirectional => LinearMode::Bidirectional,
            SslabLinearMode::OneSided => LinearMode::OneSided,
        }
    }
}

/// Region checks of the linear chain; margins are `RHS − LHS`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SslabLinearRegions {
    pub one_directional: bool,
    pub one_directional_margin: f64,
    pub bidirectional: bool,
    pub bidirectional_margin: f64,
    pub one_sided: bool,
    pub one_sided_margin: f64,
}

/// Vehicle-string parameters. Defaults come from [`sslab_platoon_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SslabPlatoonParams {
    pub n: usize,
    pub l_safe: f64,
    pub lambda: f64,
    pub v_max: f64,
    pub v_star: f64,
    pub mu: f64,
    pub q: f64,
    pub a_amp: f64,
}

impl From<SslabPlatoonParams> for PlatoonParams {
    fn from(p: SslabPlatoonParams) -> Self {
        PlatoonParams {
            n: p.n,
            l_safe: p.l_safe,
            lambda: p.lambda,
            v_max: p.v_max,
            v_star: p.v_star,
            mu: p.mu,
            q: p.q,
            a_amp: p.a_amp,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SslabPlatoonConstants {
    pub varpi: f64,
    pub x: f64,
    pub eta: f64,
    pub lambda_bound: f64,
    pub c: f64,
    pub gamma1: f64,
    pub k: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SslabVerifyOptions {
    pub t_end: f64,
    pub base_step: f64,
    pub allow_uncertified: bool,
    pub compare_original: bool,
}

/// Summary of a verification run. `transform_mismatch` is negative when the
/// original-coordinate comparison was skipped.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SslabPlatoonSummary {
    pub n: usize,
    pub k: f64,
    pub lambda_bound: f64,
    pub leader_peak: f64,
    pub certified_regime: bool,
    pub min_slack: f64,
    pub min_budget_slack: f64,
    pub collision_free: bool,
    pub speed_bounds_ok: bool,
    pub min_gap: f64,
    pub transform_mismatch: f64,
    pub completed: bool,
}

/// Length-uniform bound of a linear chain.
pub struct SslabBound(StringBound);

/// Result of a vehicle-string verification run.
pub struct SslabPlatoonRun(PlatoonRun);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| {
        let mut buf = msg.into_bytes();
        buf.retain(|b| *b != 0);
        buf.push(0);
        *e.borrow_mut() = buf;
    });
}

fn status_of(err: &Error) -> SslabStatus {
    match err {
        Error::Input(_) | Error::Range { .. } => SslabStatus::InvalidInput,
        Error::Domain(_) => SslabStatus::Domain,
        Error::Precondition(_) | Error::SmallGain { .. } => SslabStatus::Condition,
        Error::CertifiedRegime { .. } => SslabStatus::Uncertified,
        Error::Numeric { .. } => SslabStatus::Numeric,
        Error::Io(_) => SslabStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SslabStatus>) -> SslabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SslabStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            SslabStatus::Panic
        }
    }
}

fn fail(err: Error) -> SslabStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null(what: &str) -> SslabStatus {
    set_error(format!("{what} is null"));
    SslabStatus::NullPointer
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length including the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sslab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let msg: &[u8] = if e.is_empty() { b"\0" } else { &e };
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn sslab_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version"),
    };
    V.as_ptr()
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sslab_linear_regions(a: f64, b: f64, k: f64, out: *mut SslabLinearRegions) -> SslabStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let p = LinearParams::new(a, b, k).map_err(fail)?;
        let r = linear_string::trajectory_conditions(&p);
        *out = SslabLinearRegions {
            one_directional: r.one_directional.holds,
            one_directional_margin: r.one_directional.margin,
            bidirectional: r.bidirectional.holds,
            bidirectional_margin: r.bidirectional.margin,
            one_sided: r.one_sided.holds,
            one_sided_margin: r.one_sided.margin,
        };
        Ok(())
    })
}

/// Builds the certified bound of the linear chain of length `n`.
///
/// # Safety
/// `out` must be null or valid for writes. On success `*out` owns a handle.
#[no_mangle]
pub unsafe extern "C" fn sslab_linear_bound_new(
    a: f64,
    b: f64,
    k: f64,
    mode: SslabLinearMode,
    n: usize,
    out: *mut *mut SslabBound,
) -> SslabStatus {
    if out.is_null() {
        return null("out");
    }
    *out = ptr::null_mut();
    guard(|| {
        let p = LinearParams::new(a, b, k).map_err(fail)?;
        let bound = linear_string::linear_bounds(&p, mode.into(), n).map_err(fail)?;
        *out = Box::into_raw(Box::new(SslabBound(bound)));
        Ok(())
    })
}

/// # Safety
/// `bound` must be null or a handle from [`sslab_linear_bound_new`].
#[no_mangle]
pub unsafe extern "C" fn sslab_bound_free(bound: *mut SslabBound) {
    if !bound.is_null() {
        drop(Box::from_raw(bound));
    }
}

/// Slopes of the bound in front of the upstream and downstream input norms.
///
/// # Safety
/// `bound` must be a live handle; `a1` and `a2` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sslab_bound_slopes(bound: *const SslabBound, a1: *mut f64, a2: *mut f64) -> SslabStatus {
    let Some(b) = bound.as_ref() else {
        return null("bound");
    };
    if !a1.is_null() {
        *a1 = b.0.a1_slope;
    }
    if !a2.is_null() {
        *a2 = b.0.a2_slope;
    }
    guard(|| Ok(()))
}

/// Initial-condition term for scalar initial states `xi[0..n]`.
///
/// # Safety
/// `bound` must be a live handle, `xi` must point to `n` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sslab_bound_qn(bound: *const SslabBound, xi: *const f64, n: usize, out: *mut f64) -> SslabStatus {
    let Some(b) = bound.as_ref() else {
        return null("bound");
    };
    if xi.is_null() || out.is_null() {
        return null("xi or out");
    }
    guard(|| {
        let states: Vec<Vec<f64>> = slice::from_raw_parts(xi, n).iter().map(|x| vec![*x]).collect();
        *out = b.0.qn(&states).map_err(fail)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn sslab_platoon_params_default() -> SslabPlatoonParams {
    let p = PlatoonParams::default();
    SslabPlatoonParams {
        n: p.n,
        l_safe: p.l_safe,
        lambda: p.lambda,
        v_max: p.v_max,
        v_star: p.v_star,
        mu: p.mu,
        q: p.q,
        a_amp: p.a_amp,
    }
}

#[no_mangle]
pub extern "C" fn sslab_verify_options_default() -> SslabVerifyOptions {
    let o = VerifyOptions::default();
    SslabVerifyOptions {
        t_end: o.t_end,
        base_step: o.base_step,
        allow_uncertified: o.allow_uncertified,
        compare_original: o.compare_original,
    }
}

/// # Safety
/// `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sslab_platoon_constants(
    params: *const SslabPlatoonParams,
    out: *mut SslabPlatoonConstants,
) -> SslabStatus {
    let (Some(p), false) = (params.as_ref(), out.is_null()) else {
        return null("params or out");
    };
    guard(|| {
        let p: PlatoonParams = (*p).into();
        p.validate().map_err(fail)?;
        let c = platoon::platoon_constants(&p);
        *out = SslabPlatoonConstants {
            varpi: c.varpi,
            x: c.x,
            eta: c.eta,
            lambda_bound: c.lambda_bound,
            c: c.c,
            gamma1: c.gamma1,
            k: c.k,
        };
        Ok(())
    })
}

/// Runs the vehicle string from gaps `s[0..n]` and speeds `v[0..n]` under the
/// leader input `y0` sampled every `dt` from `t = 0` (`y0_len` samples, at
/// least up to `opts.t_end`).
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable. On
/// success `*out` owns a handle.
#[no_mangle]
pub unsafe extern "C" fn sslab_platoon_verify(
    params: *const SslabPlatoonParams,
    s: *const f64,
    v: *const f64,
    y0: *const f64,
    y0_len: usize,
    dt: f64,
    opts: *const SslabVerifyOptions,
    out: *mut *mut SslabPlatoonRun,
) -> SslabStatus {
    if out.is_null() {
        return null("out");
    }
    *out = ptr::null_mut();
    let (Some(p), Some(o)) = (params.as_ref(), opts.as_ref()) else {
        return null("params or opts");
    };
    if s.is_null() || v.is_null() || y0.is_null() {
        return null("state or leader input");
    }
    guard(|| {
        let p: PlatoonParams = (*p).into();
        let initial = PlatoonState {
            s: slice::from_raw_parts(s, p.n).to_vec(),
            v: slice::from_raw_parts(v, p.n).to_vec(),
        };
        let leader = TimeSeries::scalar(0.0, dt, slice::from_raw_parts(y0, y0_len).to_vec()).map_err(fail)?;
        let opts = VerifyOptions {
            t_end: o.t_end,
            base_step: o.base_step,
            allow_uncertified: o.allow_uncertified,
            compare_original: o.compare_original,
        };
        let run = platoon::verify_certified_bound(&p, &initial, &leader, &opts).map_err(fail)?;
        *out = Box::into_raw(Box::new(SslabPlatoonRun(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sslab_platoon_run_summary(
    run: *const SslabPlatoonRun,
    out: *mut SslabPlatoonSummary,
) -> SslabStatus {
    let (Some(r), false) = (run.as_ref(), out.is_null()) else {
        return null("run or out");
    };
    let r = &r.0.report;
    *out = SslabPlatoonSummary {
        n: r.n,
        k: r.k,
        lambda_bound: r.lambda_bound,
        leader_peak: r.leader_peak,
        certified_regime: r.certified_regime,
        min_slack: r.min_slack,
        min_budget_slack: r.min_budget_slack,
        collision_free: r.collision_free,
        speed_bounds_ok: r.speed_bounds_ok,
        min_gap: r.min_gap,
        transform_mismatch: r.transform_mismatch.unwrap_or(-1.0),
        completed: r.exit == sslab::string_sim::ExitReason::None,
    };
    guard(|| Ok(()))
}

/// Report of the run as NUL-terminated JSON, copied like [`sslab_last_error`].
///
/// # Safety
/// `run` must be a live handle; `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sslab_platoon_run_report_json(
    run: *const SslabPlatoonRun,
    buf: *mut c_char,
    len: usize,
) -> usize {
    let Some(r) = run.as_ref() else {
        null("run");
        return 0;
    };
    let mut json = serde_json::to_vec(&r.0.report).unwrap_or_default();
    json.push(0);
    if !buf.is_null() && len > 0 {
        let n = json.len().min(len);
        ptr::copy_nonoverlapping(json.as_ptr().cast(), buf, n);
        *buf.add(n - 1) = 0;
    }
    json.len()
}

/// # Safety
/// `run` must be null or a handle from [`sslab_platoon_verify`].
#[no_mangle]
pub unsafe extern "C" fn sslab_platoon_run_free(run: *mut SslabPlatoonRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
