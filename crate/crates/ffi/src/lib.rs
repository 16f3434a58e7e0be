//! C ABI over the admit engine.
//!
//! Every function returns an [`AdmitStatus`]; on failure a message is
//! available from [`admit_last_error`] on the same thread. Strings handed
//! out by the library are NUL-terminated UTF-8 and must be released with
//! [`admit_string_free`]; handles have their own `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use admit::config::RunConfig;
use admit::pcac::{self, CandidateEntry, Certificate};
use admit::types::{Decision, GovernanceSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidInput = 4,
    Internal = 5,
}

/// Validated governance specification.
pub struct AdmitGovernance {
    spec: GovernanceSpec,
}

/// Result of one compilation: decision plus certificate.
pub struct AdmitCompilation {
    decision: Decision,
    certificate: Certificate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(AdmitStatus, String);

impl From<admit::error::Error> for Failure {
    fn from(e: admit::error::Error) -> Self {
        Failure(AdmitStatus::InvalidInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdmitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdmitStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AdmitStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AdmitStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(AdmitStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn parse<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure(AdmitStatus::InvalidJson, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(AdmitStatus::Internal, "string contains NUL".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(AdmitStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(AdmitStatus::NullPointer, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn admit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn admit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a governance spec from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_governance_from_json(
    json: *const c_char,
    out: *mut *mut AdmitGovernance,
) -> AdmitStatus {
    guard(|| {
        let spec: GovernanceSpec = parse(read_str(json, "json")?, "governance")?;
        write_out(out, Box::into_raw(Box::new(AdmitGovernance { spec })))
    })
}

/// The built-in reference governance.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_governance_reference(out: *mut *mut AdmitGovernance) -> AdmitStatus {
    guard(|| {
        let spec = GovernanceSpec::regime_switch_reference();
        write_out(out, Box::into_raw(Box::new(AdmitGovernance { spec })))
    })
}

/// SHA-256 of the canonical governance bytes, lowercase hex.
///
/// # Safety
/// `gov` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_governance_hash(
    gov: *const AdmitGovernance,
    out: *mut *mut c_char,
) -> AdmitStatus {
    guard(|| {
        let g = handle(gov, "governance")?;
        write_out(out, to_c_string(pcac::gov_hash(&g.spec))?)
    })
}

/// # Safety
/// `gov` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn admit_governance_free(gov: *mut AdmitGovernance) {
    if !gov.is_null() {
        drop(Box::from_raw(gov));
    }
}

/// Runs a full evaluation from a run-config JSON and returns the report
/// JSON (without timing information).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_evaluate_config_json(
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> AdmitStatus {
    guard(|| {
        let cfg = RunConfig::from_json_str(read_str(config_json, "config_json")?)?;
        let (report, _) = admit::cli::evaluation_report(&cfg)?;
        write_out(out, to_c_string(report.to_string())?)
    })
}

/// Compiles a decision from a JSON array of `{"id", "metrics"}` entries.
/// `escalation_id` may be null.
///
/// # Safety
/// Pointers must be valid as documented; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_compile_json(
    gov: *const AdmitGovernance,
    candidates_json: *const c_char,
    escalation_id: *const c_char,
    out: *mut *mut AdmitCompilation,
) -> AdmitStatus {
    guard(|| {
        let g = handle(gov, "governance")?;
        let cands: Vec<CandidateEntry> = parse(read_str(candidates_json, "candidates_json")?, "candidates")?;
        let esc = if escalation_id.is_null() {
            None
        } else {
            Some(read_str(escalation_id, "escalation_id")?)
        };
        let (decision, certificate) = pcac::compile(&cands, &g.spec, esc)?;
        write_out(
            out,
            Box::into_raw(Box::new(AdmitCompilation {
                decision,
                certificate,
            })),
        )
    })
}

/// Verdict code: 0 act, 2 escalate, 3 abort; -1 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn admit_compilation_verdict(c: *const AdmitCompilation) -> c_int {
    c.as_ref().map_or(-1, |c| c.decision.exit_code())
}

/// Selected policy id, or null in `*out` when the verdict is not act.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_compilation_selected(
    c: *const AdmitCompilation,
    out: *mut *mut c_char,
) -> AdmitStatus {
    guard(|| {
        let c = handle(c, "compilation")?;
        let s = match c.decision.policy_id() {
            Some(id) => to_c_string(id.to_string())?,
            None => ptr::null_mut(),
        };
        write_out(out, s)
    })
}

/// Canonical certificate bytes as a string.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_compilation_certificate_json(
    c: *const AdmitCompilation,
    out: *mut *mut c_char,
) -> AdmitStatus {
    guard(|| {
        let c = handle(c, "compilation")?;
        let text = String::from_utf8(c.certificate.to_canonical_bytes())
            .map_err(|e| Failure(AdmitStatus::Internal, e.to_string()))?;
        write_out(out, to_c_string(text)?)
    })
}

/// # Safety
/// `c` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn admit_compilation_free(c: *mut AdmitCompilation) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Replays a certificate. `*valid` is set to 1 when it matches a fresh
/// compilation byte for byte, else 0.
///
/// # Safety
/// Pointers must be valid as documented; `valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn admit_verify_json(
    gov: *const AdmitGovernance,
    certificate_json: *const c_char,
    candidates_json: *const c_char,
    valid: *mut c_int,
) -> AdmitStatus {
    guard(|| {
        let g = handle(gov, "governance")?;
        let cert = read_str(certificate_json, "certificate_json")?;
        let cands: Vec<CandidateEntry> = parse(read_str(candidates_json, "candidates_json")?, "candidates")?;
        let ok = pcac::verify_bytes(cert.as_bytes(), &cands, &g.spec);
        write_out(valid, c_int::from(ok))
    })
}
