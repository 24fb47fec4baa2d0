//! C ABI for the verification engine.
//!
//! Handles are opaque; every function returns an [`AlvStatus`] (or a value
//! with an out-parameter for the handle). On any non-OK status the
//! thread-local error message is set and can be fetched with
//! [`alv_last_error_message`]. Strings returned by this library must be
//! released with [`alv_string_free`]; handles with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use alv_core::report::Report;
use alv_core::scenario::{ResolvedScenario, ScenarioFile};
use alv_core::suites;
use alv_core::Error;

/// Status codes mirroring the engine's error taxonomy.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlvStatus {
    AlvOk = 0,
    AlvNullPointer = 1,
    AlvInvalidUtf8 = 2,
    AlvConfigError = 3,
    AlvValidationError = 4,
    AlvShapeError = 5,
    AlvDomainError = 6,
    AlvPreconditionError = 7,
    AlvRuntimeError = 8,
}

/// Opaque scenario handle.
pub struct AlvScenario {
    resolved: ResolvedScenario,
}

/// Opaque report handle.
pub struct AlvReport {
    report: Report,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AlvStatus {
    match err {
        Error::Domain { .. } => AlvStatus::AlvDomainError,
        Error::Shape(_) => AlvStatus::AlvShapeError,
        Error::Validation(_) => AlvStatus::AlvValidationError,
        Error::Precondition(_) => AlvStatus::AlvPreconditionError,
        Error::Config(_) => AlvStatus::AlvConfigError,
    }
}

fn fail(err: Error) -> AlvStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guarded(f: impl FnOnce() -> AlvStatus) -> AlvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".to_string());
            AlvStatus::AlvRuntimeError
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or NULL.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, AlvStatus> {
    if ptr.is_null() {
        set_error("null string argument".to_string());
        return Err(AlvStatus::AlvNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".to_string());
        AlvStatus::AlvInvalidUtf8
    })
}

fn emit_scenario(file: ScenarioFile, out: *mut *mut AlvScenario) -> AlvStatus {
    match file.resolve() {
        Ok(resolved) => {
            let handle = Box::new(AlvScenario { resolved });
            unsafe { *out = Box::into_raw(handle) };
            AlvStatus::AlvOk
        }
        Err(e) => fail(e),
    }
}

/// Load and validate a scenario from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the scenario until `alv_scenario_free`.
#[no_mangle]
pub unsafe extern "C" fn alv_scenario_load(
    path: *const c_char,
    out: *mut *mut AlvScenario,
) -> AlvStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out-parameter".to_string());
            return AlvStatus::AlvNullPointer;
        }
        let path = match read_str(path) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match ScenarioFile::load(Path::new(path)) {
            Ok(f) => emit_scenario(f, out),
            Err(e) => fail(e),
        }
    })
}

/// Parse and validate a scenario from a JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the scenario until `alv_scenario_free`.
#[no_mangle]
pub unsafe extern "C" fn alv_scenario_from_json(
    json: *const c_char,
    out: *mut *mut AlvScenario,
) -> AlvStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out-parameter".to_string());
            return AlvStatus::AlvNullPointer;
        }
        let json = match read_str(json) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match ScenarioFile::from_json(json) {
            Ok(f) => emit_scenario(f, out),
            Err(e) => fail(e),
        }
    })
}

/// Release a scenario handle (NULL is a no-op).
///
/// # Safety
/// `scenario` must be NULL or a pointer obtained from a scenario constructor,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn alv_scenario_free(scenario: *mut AlvScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run every suite of the scenario. `seed_override` and `samples_override`
/// replace the scenario's sampling parameters when ≥ 0; `tol_scale`
/// multiplies every tolerance (pass 1.0 for the defaults).
///
/// # Safety
/// `scenario` must be a live scenario handle; `out` must be a valid pointer.
/// On success `*out` owns the report until `alv_report_free`.
#[no_mangle]
pub unsafe extern "C" fn alv_scenario_run(
    scenario: *const AlvScenario,
    seed_override: i64,
    samples_override: i64,
    tol_scale: f64,
    out: *mut *mut AlvReport,
) -> AlvStatus {
    guarded(|| {
        if scenario.is_null() || out.is_null() {
            set_error("null handle".to_string());
            return AlvStatus::AlvNullPointer;
        }
        if !(tol_scale > 0.0) {
            set_error("tol_scale must be positive".to_string());
            return AlvStatus::AlvConfigError;
        }
        let mut sc = ResolvedScenario {
            algebroids: (*scenario).resolved.algebroids.clone(),
            prolongations: (*scenario).resolved.prolongations.clone(),
            connections: (*scenario).resolved.connections.clone(),
            towers: (*scenario).resolved.towers.clone(),
            suites: (*scenario).resolved.suites.clone(),
            sampling: (*scenario).resolved.sampling,
        };
        if seed_override >= 0 {
            sc.sampling.seed = seed_override as u64;
        }
        if samples_override > 0 {
            sc.sampling.count = samples_override as usize;
        }
        match suites::run_all(&sc, tol_scale) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(AlvReport { report }));
                AlvStatus::AlvOk
            }
            Err(e) => fail(e),
        }
    })
}

/// 1 if every suite passed, 0 otherwise (or on NULL).
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn alv_report_pass(report: *const AlvReport) -> i32 {
    if report.is_null() {
        return 0;
    }
    (*report).report.pass as i32
}

/// Number of suites in the report (0 on NULL).
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn alv_report_suite_count(report: *const AlvReport) -> usize {
    if report.is_null() {
        return 0;
    }
    (*report).report.suites.len()
}

/// The report as a JSON string; NULL on error. Free with `alv_string_free`.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn alv_report_json(report: *const AlvReport) -> *mut c_char {
    if report.is_null() {
        set_error("null report handle".to_string());
        return std::ptr::null_mut();
    }
    match CString::new((*report).report.to_json()) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_error("report JSON contains NUL".to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a report handle (NULL is a no-op).
///
/// # Safety
/// `report` must be NULL or a pointer obtained from `alv_scenario_run`, not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn alv_report_free(report: *mut AlvReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Release a string returned by this library (NULL is a no-op).
///
/// # Safety
/// `s` must be NULL or a pointer returned by an `alv_*` function that
/// documents `alv_string_free`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn alv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The last error message on this thread, or NULL if none. Free with
/// `alv_string_free`.
#[no_mangle]
pub extern "C" fn alv_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}
