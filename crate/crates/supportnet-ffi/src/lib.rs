//! C ABI for the supportnet library.
//!
//! Conventions:
//! - Every fallible call returns an `SnStatus`; `SN_OK` is zero.
//! - On failure, `sn_last_error` returns a thread-local message that stays
//!   valid until the next failing call on the same thread.
//! - `SnNetwork` is an opaque handle. Handles from `sn_*` constructors must
//!   be released with `sn_network_free`, strings with `sn_string_free`.
//! - No call unwinds across the boundary; panics are caught and reported
//!   as `SN_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;
use supportnet::adjust::adjust_support;
use supportnet::error::Error;
use supportnet::mask::{build_cube_mask, delta_for_epsilon, outer_halfwidth, MaskSpec};
use supportnet::network::Network;
use supportnet::serialize;

/// Status codes. Zero is success; anything else is an error and
/// `sn_last_error` carries the detail.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SnStatus {
    SnOk = 0,
    SnErrNullArgument = 1,
    SnErrInvalid = 2,
    SnErrUnsupported = 3,
    SnErrBudget = 4,
    SnErrParse = 5,
    SnErrPanic = 6,
}

/// Architecture counters of a network (see the library documentation for
/// the counting conventions: depth counts activation layers, pooling is
/// counted separately).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SnStats {
    pub width: usize,
    pub depth: usize,
    pub pool_count: usize,
    pub param_count: usize,
}

/// Opaque network handle.
pub struct SnNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> SnStatus {
    match err {
        Error::DimensionMismatch { .. }
        | Error::OddPoolWidth { .. }
        | Error::NotPowerOfTwo { .. }
        | Error::InvalidParameter(_)
        | Error::Degenerate(_) => SnStatus::SnErrInvalid,
        Error::AnalyticActivation(_) => SnStatus::SnErrUnsupported,
        Error::BudgetExceeded(_) => SnStatus::SnErrBudget,
        Error::Parse { .. } | Error::Io(_) => SnStatus::SnErrParse,
    }
}

fn fail(err: &Error) -> SnStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn null_arg(what: &str) -> SnStatus {
    set_error(&format!("{what} must not be null"));
    SnStatus::SnErrNullArgument
}

/// Run `body` with panics converted to SN_ERR_PANIC.
fn guarded(body: impl FnOnce() -> SnStatus) -> SnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            SnStatus::SnErrPanic
        }
    }
}

/// Message of the last error on this thread. Never null; empty before the
/// first failure. Valid until the next failing `sn_*` call on this thread.
#[no_mangle]
pub extern "C" fn sn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by an `sn_*` call.
#[no_mangle]
pub unsafe extern "C" fn sn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a network handle.
///
/// # Safety
/// `net` must be null or a pointer previously returned by an `sn_*` call.
#[no_mangle]
pub unsafe extern "C" fn sn_network_free(net: *mut SnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

unsafe fn emit_network(net: Network, out: *mut *mut SnNetwork) -> SnStatus {
    *out = Box::into_raw(Box::new(SnNetwork(net)));
    SnStatus::SnOk
}

unsafe fn emit_string(text: String, out: *mut *mut c_char) -> SnStatus {
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            SnStatus::SnOk
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            SnStatus::SnErrInvalid
        }
    }
}

/// Parse a network from its JSON encoding.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn sn_network_from_json(
    json: *const c_char,
    out: *mut *mut SnNetwork,
) -> SnStatus {
    if json.is_null() {
        return null_arg("json");
    }
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("json is not valid UTF-8");
                return SnStatus::SnErrParse;
            }
        };
        match serialize::from_json(text) {
            Ok(net) => emit_network(net, out),
            Err(e) => fail(&e),
        }
    })
}

/// Encode a network as JSON. The exact bit patterns of all weights are
/// preserved; encoding the same network twice yields identical bytes.
///
/// # Safety
/// `net` must be a live handle, `out` a valid destination; free the result
/// with `sn_string_free`.
#[no_mangle]
pub unsafe extern "C" fn sn_network_to_json(
    net: *const SnNetwork,
    out: *mut *mut c_char,
) -> SnStatus {
    if net.is_null() {
        return null_arg("net");
    }
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| emit_string(serialize::to_json(&(*net).0), out))
}

/// Input dimension of a network, 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sn_network_input_dim(net: *const SnNetwork) -> usize {
    if net.is_null() {
        0
    } else {
        (*net).0.input_dim()
    }
}

/// Output dimension of a network, 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sn_network_output_dim(net: *const SnNetwork) -> usize {
    if net.is_null() {
        0
    } else {
        (*net).0.output_dim()
    }
}

/// Architecture counters of a network.
///
/// # Safety
/// `net` must be a live handle and `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn sn_network_stats(net: *const SnNetwork, out: *mut SnStats) -> SnStatus {
    if net.is_null() {
        return null_arg("net");
    }
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let s = (*net).0.stats();
        *out = SnStats {
            width: s.width,
            depth: s.depth,
            pool_count: s.pool_count,
            param_count: s.param_count,
        };
        SnStatus::SnOk
    })
}

/// Evaluate a network. `x` must hold `x_len == input_dim` values; `y` must
/// have room for `y_len == output_dim` values. The evaluation is exactly
/// the library's: same operation order, same bits.
///
/// # Safety
/// `net` must be a live handle; `x` and `y` must point to arrays of the
/// stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sn_network_eval(
    net: *const SnNetwork,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> SnStatus {
    if net.is_null() {
        return null_arg("net");
    }
    if x.is_null() {
        return null_arg("x");
    }
    if y.is_null() {
        return null_arg("y");
    }
    guarded(|| {
        let network = &(*net).0;
        if x_len != network.input_dim() {
            return fail(&Error::invalid(format!(
                "x_len {} does not match input dim {}",
                x_len,
                network.input_dim()
            )));
        }
        if y_len != network.output_dim() {
            return fail(&Error::invalid(format!(
                "y_len {} does not match output dim {}",
                y_len,
                network.output_dim()
            )));
        }
        let input = DVector::from_column_slice(std::slice::from_raw_parts(x, x_len));
        match network.evaluate(&input) {
            Ok(result) => {
                ptr::copy_nonoverlapping(result.as_ptr(), y, y_len);
                SnStatus::SnOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Build the cube mask network: exactly 1.0 on [-n, n]^d, exactly +0.0
/// outside [-(n+delta), n+delta]^d, replicated across `out_dim` outputs.
/// `d` must be a power of two.
///
/// # Safety
/// `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn sn_build_cube_mask(
    d: usize,
    n: f64,
    delta: f64,
    out_dim: usize,
    out: *mut *mut SnNetwork,
) -> SnStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| match build_cube_mask(&MaskSpec { d, n, delta, out_dim }) {
        Ok(net) => emit_network(net, out),
        Err(e) => fail(&e),
    })
}

/// Solve 2^d((n+delta)^d - n^d) = epsilon for the band margin delta.
///
/// # Safety
/// `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn sn_delta_for_epsilon(
    d: usize,
    n: f64,
    epsilon: f64,
    out: *mut f64,
) -> SnStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| match delta_for_epsilon(d, n, epsilon) {
        Ok(delta) => {
            *out = delta;
            SnStatus::SnOk
        }
        Err(e) => fail(&e),
    })
}

/// Certified halfwidth of the outer support box [-(n+delta), n+delta]^d,
/// rounded so the true sum never exceeds it.
#[no_mangle]
pub extern "C" fn sn_outer_halfwidth(n: f64, delta: f64) -> f64 {
    outer_halfwidth(n, delta)
}

/// Support adjustment: build from `net` a network equal to it on [-n, n]^d,
/// exactly zero outside a certified box, with L1 gap at most `epsilon` in
/// between. `sup_bound` may be null to have the bound sampled. On success
/// `*out_net` holds the adjusted network and `*out_cert_json` its
/// certificate as JSON.
///
/// # Safety
/// `net` must be a live handle; `sup_bound` null or valid; `out_net` and
/// `out_cert_json` valid destinations.
#[no_mangle]
pub unsafe extern "C" fn sn_adjust_support(
    net: *const SnNetwork,
    n: f64,
    epsilon: f64,
    sup_bound: *const f64,
    out_net: *mut *mut SnNetwork,
    out_cert_json: *mut *mut c_char,
) -> SnStatus {
    if net.is_null() {
        return null_arg("net");
    }
    if out_net.is_null() {
        return null_arg("out_net");
    }
    if out_cert_json.is_null() {
        return null_arg("out_cert_json");
    }
    guarded(|| {
        let bound = if sup_bound.is_null() { None } else { Some(*sup_bound) };
        match adjust_support(&(*net).0, n, epsilon, bound) {
            Ok((g, cert)) => {
                let text = match serde_json::to_string_pretty(&cert) {
                    Ok(t) => t,
                    Err(e) => {
                        set_error(&e.to_string());
                        return SnStatus::SnErrParse;
                    }
                };
                let status = emit_string(text, out_cert_json);
                if status != SnStatus::SnOk {
                    return status;
                }
                emit_network(g, out_net)
            }
            Err(e) => fail(&e),
        }
    })
}
