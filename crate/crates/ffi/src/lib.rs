//! C ABI for the gaussruin library.
//!
//! Conventions:
//! * Models are opaque handles created from the JSON wire format and freed
//!   with [`gr_model_free`].
//! * Every fallible call returns a [`GrStatus`]; on failure
//!   [`gr_last_error_message`] yields a thread-local description.
//! * Structured results come back either as UTF-8 JSON strings (free with
//!   [`gr_string_free`]) or as flat `#[repr(C)]` structs.
//!
//! The matching header lives at `include/gaussruin.h`. It is committed
//! pre-generated; `cbindgen --config cbindgen.toml` reproduces it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gaussruin::asymptotics;
use gaussruin::montecarlo::{self, McConfig, RefineConfig};
use gaussruin::qp;
use gaussruin::{Error, ModelSpec};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    AssumptionViolated = 4,
    NumericError = 5,
    InternalPanic = 6,
}

/// Opaque model handle.
pub struct GrModel {
    spec: ModelSpec,
}

/// Monte Carlo configuration mirror of the library type.
/// `refine_points = 0` disables endpoint refinement; `ess` in the estimate
/// is NaN for crude runs.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct GrMcConfig {
    pub n_samples: u64,
    pub grid_points: u64,
    pub seed: u64,
    pub batches: u64,
    pub importance_sampling: bool,
    pub confidence_level: f64,
    pub refine_points: u64,
    pub refine_l: f64,
}

/// Flat ruin-probability estimate.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct GrMcEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: u64,
    pub m: u64,
    pub hits: u64,
    pub ess: f64,
    pub importance: bool,
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> GrStatus {
    match err {
        Error::MalformedSpec { .. } => GrStatus::ParseError,
        Error::AssumptionViolated(_) => GrStatus::AssumptionViolated,
        Error::InvalidParameter(_)
        | Error::InvalidDirection
        | Error::DimensionMismatch(_)
        | Error::DimensionTooLarge(_, _)
        | Error::NonPositiveTime(_)
        | Error::GridNotSorted(_)
        | Error::DegenerateGrid(_) => GrStatus::InvalidArgument,
        _ => GrStatus::NumericError,
    }
}

fn fail(err: &Error) -> GrStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Run a fallible body, translating errors and panics to status codes.
fn guarded(body: impl FnOnce() -> Result<(), GrStatus>) -> GrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GrStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            GrStatus::InternalPanic
        }
    }
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), GrStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("report contained an interior NUL byte");
        GrStatus::NumericError
    })?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string returned by any `*_json` entry point.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn gr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model from its JSON wire format.
///
/// # Safety
/// `json` must point to a NUL-terminated UTF-8 string; `out` must be a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn gr_model_from_json(
    json: *const c_char,
    out: *mut *mut GrModel,
) -> GrStatus {
    if json.is_null() || out.is_null() {
        set_error("null pointer argument");
        return GrStatus::NullPointer;
    }
    guarded(|| {
        let text = CStr::from_ptr(json).to_str().map_err(|_| {
            set_error("model JSON is not valid UTF-8");
            GrStatus::ParseError
        })?;
        let spec = ModelSpec::from_json(text).map_err(|e| fail(&e))?;
        *out = Box::into_raw(Box::new(GrModel { spec }));
        Ok(())
    })
}

/// Free a model handle.
///
/// # Safety
/// `model` must come from [`gr_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gr_model_free(model: *mut GrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model dimension, or 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gr_model_dim(model: *const GrModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).spec.dim() as u64
}

macro_rules! require {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error("null pointer argument");
            return GrStatus::NullPointer;
        }
    };
}

/// Assumption report as JSON (`{"exact":{...},"bounds":{...}}`).
///
/// # Safety
/// `model` must be a live handle; `out_json` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gr_model_validate_json(
    model: *const GrModel,
    out_json: *mut *mut c_char,
) -> GrStatus {
    require!(model);
    require!(out_json);
    guarded(|| {
        let report = (*model).spec.validate();
        out_string(out_json, serde_json::to_string(&report).expect("report serialization"))
    })
}

/// Quadratic-programming solution at time `t` (`t <= 0` means the horizon)
/// as JSON `{a_tilde, lambda, I, J, U, D}` with 0-based index sets.
///
/// # Safety
/// `model` must be a live handle; `out_json` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gr_qp_solve_json(
    model: *const GrModel,
    t: f64,
    out_json: *mut *mut c_char,
) -> GrStatus {
    require!(model);
    require!(out_json);
    guarded(|| {
        let spec = &(*model).spec;
        let at = if t > 0.0 { t } else { spec.horizon() };
        let sigma = spec.covariance_at(at).map_err(|e| fail(&e))?;
        let sol = qp::solve_pi(&sigma, spec.direction()).map_err(|e| fail(&e))?;
        out_string(out_json, serde_json::to_string(&sol).expect("solution serialization"))
    })
}

/// Full asymptotic report at level `u` as JSON.
///
/// # Safety
/// `model` must be a live handle; `out_json` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gr_asymptotics_json(
    model: *const GrModel,
    u: f64,
    out_json: *mut *mut c_char,
) -> GrStatus {
    require!(model);
    require!(out_json);
    guarded(|| {
        let report = asymptotics::report(&(*model).spec, u, &[]).map_err(|e| fail(&e))?;
        out_string(out_json, serde_json::to_string(&report).expect("report serialization"))
    })
}

/// The correction constant `C ≥ 1`.
///
/// # Safety
/// `model` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gr_constant_c(model: *const GrModel, out: *mut f64) -> GrStatus {
    require!(model);
    require!(out);
    guarded(|| {
        *out = asymptotics::constant_c(&(*model).spec).map_err(|e| fail(&e))?;
        Ok(())
    })
}

/// Finite-window constant `C(L)`.
///
/// # Safety
/// `model` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gr_constant_c_of_l(
    model: *const GrModel,
    l: f64,
    out: *mut f64,
) -> GrStatus {
    require!(model);
    require!(out);
    guarded(|| {
        *out = asymptotics::constant_c_of_l(&(*model).spec, l).map_err(|e| fail(&e))?;
        Ok(())
    })
}

/// Uniform bounds at the level vector `u·a`.
///
/// # Safety
/// `model` must be a live handle; `out_lower`/`out_upper` valid destinations.
#[no_mangle]
pub unsafe extern "C" fn gr_bounds(
    model: *const GrModel,
    u: f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> GrStatus {
    require!(model);
    require!(out_lower);
    require!(out_upper);
    guarded(|| {
        let spec = &(*model).spec;
        let b = asymptotics::bounds(spec, &(spec.direction() * u)).map_err(|e| fail(&e))?;
        *out_lower = b.lower.value;
        *out_upper = b.upper.value;
        Ok(())
    })
}

/// Monte Carlo estimate of the ruin probability at level `u`.
///
/// # Safety
/// `model` must be a live handle; `cfg` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gr_estimate_ruin(
    model: *const GrModel,
    u: f64,
    cfg: *const GrMcConfig,
    out: *mut GrMcEstimate,
) -> GrStatus {
    require!(model);
    require!(cfg);
    require!(out);
    guarded(|| {
        let c = &*cfg;
        let mc = McConfig {
            n_samples: c.n_samples as usize,
            grid_points: c.grid_points as usize,
            seed: c.seed,
            batches: (c.batches as usize).max(1),
            importance_sampling: c.importance_sampling,
            confidence_level: c.confidence_level,
            refine: (c.refine_points > 0)
                .then_some(RefineConfig { points: c.refine_points as usize, l: c.refine_l }),
        };
        let spec = &(*model).spec;
        let est = if mc.importance_sampling {
            montecarlo::estimate_ruin_is(spec, u, &mc)
        } else {
            montecarlo::estimate_ruin(spec, u, &mc)
        }
        .map_err(|e| fail(&e))?;
        *out = GrMcEstimate {
            p_hat: est.p_hat,
            std_err: est.std_err,
            ci_lo: est.ci.0,
            ci_hi: est.ci.1,
            n: est.n as u64,
            m: est.m as u64,
            hits: est.hits,
            ess: est.ess.unwrap_or(f64::NAN),
            importance: est.method == montecarlo::McMethod::Importance,
            degenerate: est.degenerate,
        };
        Ok(())
    })
}
