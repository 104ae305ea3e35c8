//! C ABI surface for the decoding laboratory.
//!
//! Conventions shared by every function here:
//!
//! - Fallible calls return a [`PolyspecStatus`]; `Ok` is zero so the
//!   usual `if (status) goto fail;` style works.
//! - On failure, [`polyspec_last_error`] returns a message describing
//!   the most recent failed call on the current thread. The pointer
//!   stays valid until the next failing call on that thread.
//! - Strings handed out through out-parameters are NUL-terminated
//!   UTF-8 owned by the caller; release them with
//!   [`polyspec_string_free`].
//! - The engine handle is opaque. Create it with
//!   [`polyspec_engine_new`], release it with
//!   [`polyspec_engine_free`]. Decoding takes the handle by shared
//!   reference, so one handle may serve concurrent decodes from
//!   several threads.
//! - Panics never unwind across the boundary; they surface as
//!   [`PolyspecStatus::RuntimeError`].
//!
//! The generated header lives at `include/polyspec.h` and is refreshed
//! by the build script whenever this file changes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use polyspec::config::{Experiment, ExperimentConfig};
use polyspec::engine::RunParams;
use polyspec::planner::{insertion_gain, InsertionQuery};
use polyspec::report::{render_json, TraceReport};
use polyspec::stats::{expected_acceptance, variance_acceptance_oracle, TruncGeomParams};
use polyspec::Error;

/// Outcome of a call through the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyspecStatus {
    /// The call succeeded.
    Ok = 0,
    /// An argument or configuration was rejected; see
    /// `polyspec_last_error`.
    InvalidArgument = 1,
    /// The call failed for an internal reason; see
    /// `polyspec_last_error`.
    RuntimeError = 2,
}

/// A loaded experiment: models, chain layout, decode policy, and
/// optional cost profile. Opaque to C.
pub struct PolyspecEngine {
    experiment: Experiment,
}

/// Inputs of the model-insertion analysis. Mirrors the JSON profile
/// accepted by the command line: times are per forward pass in any
/// consistent unit, acceptance lengths are mean tokens per event, and
/// `beta` is the drafting overhead ratio.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolyspecInsertionQuery {
    /// Per-pass time of the current verifier.
    pub t_current: f64,
    /// Per-pass time of the candidate model.
    pub t_new: f64,
    /// Per-pass time of the model below the insertion point.
    pub t_next: f64,
    /// Mean accepted tokens when the current verifier checks the
    /// drafter directly.
    pub l_current: f64,
    /// Mean accepted tokens when the current verifier checks the
    /// candidate.
    pub l_current_new: f64,
    /// Mean accepted tokens when the candidate checks the drafter.
    pub l_new: f64,
    /// Drafting overhead ratio of the deepest stage.
    pub beta: f64,
}

/// One insertion condition: a measured ratio against its threshold.
/// The condition favors insertion when `margin` is negative.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolyspecConditionReport {
    pub value: f64,
    pub threshold: f64,
    pub margin: f64,
}

/// Outcome of the insertion analysis, including predicted per-token
/// times and speedups for the chain with and without the candidate.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolyspecPlanReport {
    pub condition1: PolyspecConditionReport,
    pub condition2: PolyspecConditionReport,
    /// True when at least one condition favors inserting the
    /// candidate.
    pub insert: bool,
    pub two_chain_time_per_token: f64,
    pub three_chain_time_per_token: f64,
    pub two_chain_speedup: f64,
    pub three_chain_speedup: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let sanitized = message.replace('\0', " ");
    let stored = CString::new(sanitized).expect("NUL bytes were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

type ApiResult = Result<(), (PolyspecStatus, String)>;

fn api_guard<F: FnOnce() -> ApiResult>(body: F) -> PolyspecStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PolyspecStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            PolyspecStatus::RuntimeError
        }
    }
}

fn from_core(e: Error) -> (PolyspecStatus, String) {
    let status = match e {
        Error::Internal(_) => PolyspecStatus::RuntimeError,
        _ => PolyspecStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn invalid(message: String) -> (PolyspecStatus, String) {
    (PolyspecStatus::InvalidArgument, message)
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn require_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (PolyspecStatus, String)> {
    if ptr.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn require_out<T>(ptr: *mut T, what: &str) -> Result<*mut T, (PolyspecStatus, String)> {
    if ptr.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(ptr)
}

/// Message of the most recent failed call on this thread, or null when
/// no call has failed yet. Valid until the next failing call on the
/// same thread; do not free it.
#[no_mangle]
pub extern "C" fn polyspec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |m| m.as_ptr())
    })
}

/// Build an engine from an experiment configuration in JSON (the same
/// schema the command-line `decode` subcommand reads). Relative corpus
/// paths inside the configuration resolve against the process working
/// directory. On success `*out_engine` owns the engine.
///
/// # Safety
/// `config_json` must be a NUL-terminated string valid for reads and
/// `out_engine` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn polyspec_engine_new(
    config_json: *const c_char,
    out_engine: *mut *mut PolyspecEngine,
) -> PolyspecStatus {
    api_guard(|| {
        let out = require_out(out_engine, "out_engine")?;
        unsafe { out.write(std::ptr::null_mut()) };
        let text = unsafe { require_str(config_json, "config_json")? };
        let experiment = ExperimentConfig::from_json(text)
            .and_then(|config| config.build(Path::new(".")))
            .map_err(from_core)?;
        unsafe { out.write(Box::into_raw(Box::new(PolyspecEngine { experiment }))) };
        Ok(())
    })
}

/// Release an engine created by [`polyspec_engine_new`]. A null handle
/// is a no-op.
///
/// # Safety
/// `engine` must be null or a pointer previously returned by
/// [`polyspec_engine_new`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn polyspec_engine_free(engine: *mut PolyspecEngine) {
    if !engine.is_null() {
        drop(unsafe { Box::from_raw(engine) });
    }
}

/// Decode `n_tokens` tokens at `seed` and return the trace report as
/// pretty-printed JSON in `*out_trace_json`. The prompt comes from the
/// configuration's run block (empty when none was given). When the
/// configuration carries a cost profile the report includes the
/// simulated time and speedup. Free the string with
/// [`polyspec_string_free`].
///
/// # Safety
/// `engine` must be a live engine handle and `out_trace_json` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn polyspec_engine_decode(
    engine: *const PolyspecEngine,
    n_tokens: u64,
    seed: u64,
    out_trace_json: *mut *mut c_char,
) -> PolyspecStatus {
    api_guard(|| {
        let out = require_out(out_trace_json, "out_trace_json")?;
        unsafe { out.write(std::ptr::null_mut()) };
        if engine.is_null() {
            return Err(invalid("engine is null".to_string()));
        }
        let experiment = unsafe { &(*engine).experiment };
        let n_tokens = usize::try_from(n_tokens)
            .map_err(|_| invalid(format!("n_tokens {n_tokens} does not fit this platform")))?;
        let params = RunParams {
            prompt: experiment.run.prompt.resolve(seed),
            n_tokens,
            seed,
        };
        let mut trace = experiment.pipeline.decode(&params).map_err(from_core)?;
        if let Some(costs) = &experiment.costs {
            trace.attach_time(costs).map_err(from_core)?;
        }
        let report =
            TraceReport::from_trace(&trace, experiment.charset.as_ref()).map_err(from_core)?;
        let text = render_json(&report).map_err(from_core)?;
        let owned = CString::new(text).expect("JSON reports contain no NUL bytes");
        unsafe { out.write(owned.into_raw()) };
        Ok(())
    })
}

/// Release a string returned by this library. A null pointer is a
/// no-op.
///
/// # Safety
/// `s` must be null or a string previously returned through one of
/// this library's out-parameters that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn polyspec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Evaluate whether a candidate model is worth inserting between an
/// existing verifier and its drafter, writing the full report to
/// `*out_report`.
///
/// # Safety
/// `query` must be valid for reads and `out_report` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn polyspec_insertion_gain(
    query: *const PolyspecInsertionQuery,
    out_report: *mut PolyspecPlanReport,
) -> PolyspecStatus {
    api_guard(|| {
        let out = require_out(out_report, "out_report")?;
        if query.is_null() {
            return Err(invalid("query is null".to_string()));
        }
        let q = unsafe { *query };
        let report = insertion_gain(&InsertionQuery {
            t_current: q.t_current,
            t_new: q.t_new,
            t_next: q.t_next,
            l_current: q.l_current,
            l_current_new: q.l_current_new,
            l_new: q.l_new,
            beta: q.beta,
        })
        .map_err(from_core)?;
        let condition = |c: polyspec::planner::ConditionReport| PolyspecConditionReport {
            value: c.value,
            threshold: c.threshold,
            margin: c.margin,
        };
        unsafe {
            out.write(PolyspecPlanReport {
                condition1: condition(report.condition1),
                condition2: condition(report.condition2),
                insert: report.insert,
                two_chain_time_per_token: report.two_chain_time_per_token,
                three_chain_time_per_token: report.three_chain_time_per_token,
                two_chain_speedup: report.two_chain_speedup,
                three_chain_speedup: report.three_chain_speedup,
            })
        };
        Ok(())
    })
}

/// Mean verified tokens per event when each position stops with
/// probability `p` and a block spans at most `n` tokens. `p` must lie
/// in (0, 1] and `n` must be at least 1.
///
/// # Safety
/// `out_mean` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn polyspec_expected_acceptance(
    p: f64,
    n: u64,
    out_mean: *mut f64,
) -> PolyspecStatus {
    api_guard(|| {
        let out = require_out(out_mean, "out_mean")?;
        let params = trunc_geom_params(p, n)?;
        unsafe { out.write(expected_acceptance(&params)) };
        Ok(())
    })
}

/// Variance of the verified tokens per event under the same law as
/// [`polyspec_expected_acceptance`], computed by exact summation.
///
/// # Safety
/// `out_variance` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn polyspec_acceptance_variance(
    p: f64,
    n: u64,
    out_variance: *mut f64,
) -> PolyspecStatus {
    api_guard(|| {
        let out = require_out(out_variance, "out_variance")?;
        let params = trunc_geom_params(p, n)?;
        unsafe { out.write(variance_acceptance_oracle(&params)) };
        Ok(())
    })
}

fn trunc_geom_params(p: f64, n: u64) -> Result<TruncGeomParams, (PolyspecStatus, String)> {
    let n = usize::try_from(n).map_err(|_| invalid(format!("n {n} does not fit this platform")))?;
    TruncGeomParams::new(p, n).map_err(from_core)
}
