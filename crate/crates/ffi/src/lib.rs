//! C ABI for `quatwind`.
//!
//! Every fallible function returns a [`QwStatus`]; on failure the message is
//! kept per thread and can be copied out with [`qw_last_error_message`].
//! Results are written through caller-provided pointers.

#![allow(clippy::missing_safety_doc, clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quatwind::harness::{run_verify, RunConfig};
use quatwind::laws::{
    cf_flat_exact_norm, cf_hh1_limit, cosh2_moment, hh1_limit_density_radial, relativistic_cauchy_radial,
};
use quatwind::winding::{simulate_direct, simulate_timechange};
use quatwind::{Error, Geometry, GeometryKind, StepPolicy, StreamKey, WindingVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    PathThroughOrigin = 4,
    StepFailure = 5,
    Accuracy = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QwGeometry {
    Flat = 0,
    Hp1 = 1,
    Hh1 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QwRoute {
    Timechange = 0,
    Direct = 1,
}

/// Opaque simulation handle.
pub struct QwSampler {
    geometry: Geometry,
    horizon: f64,
    policy: StepPolicy,
    key: StreamKey,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QwStatus {
    match e {
        Error::Domain(_) => QwStatus::Domain,
        Error::PathThroughOrigin { .. } => QwStatus::PathThroughOrigin,
        Error::StepFailure { .. } => QwStatus::StepFailure,
        Error::Accuracy { .. } => QwStatus::Accuracy,
        Error::Config(_) => QwStatus::InvalidArgument,
        Error::Io(_) => QwStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), (QwStatus, String)>>(f: F) -> QwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QwStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".to_string());
            QwStatus::Panic
        }
    }
}

fn lib<T>(r: quatwind::Result<T>) -> Result<T, (QwStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (QwStatus, String) {
    (QwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), (QwStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or
/// 0 when there is no error.
#[no_mangle]
pub unsafe extern "C" fn qw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a sampler. `step <= 0` selects the default grid for `horizon`.
/// `refine = 0` disables Brownian-bridge refinement.
#[no_mangle]
pub unsafe extern "C" fn qw_sampler_new(
    geometry: QwGeometry,
    start_radius: f64,
    horizon: f64,
    step: f64,
    refine: i32,
    seed: u64,
    out: *mut *mut QwSampler,
) -> QwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match geometry {
            QwGeometry::Flat => GeometryKind::Flat,
            QwGeometry::Hp1 => GeometryKind::Hp1,
            QwGeometry::Hh1 => GeometryKind::Hh1,
        };
        let geometry = lib(Geometry::new(kind, start_radius))?;
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err((
                QwStatus::InvalidArgument,
                format!("horizon {horizon} must be finite and >= 0"),
            ));
        }
        let mut policy = if step > 0.0 {
            StepPolicy::uniform(step)
        } else {
            StepPolicy::default_for(horizon)
        };
        if refine == 0 {
            policy = policy.without_refinement();
        }
        lib(policy.times(horizon))?;
        let s = Box::new(QwSampler {
            geometry,
            horizon,
            policy,
            key: StreamKey::new(seed),
        });
        *out = Box::into_raw(s);
        Ok(())
    })
}

/// Draws `n_paths` samples. `zeta` receives `3 * n_paths` doubles, row-major.
/// `clock` may be null; otherwise it receives `n_paths` values of `A_t`
/// (NaN for the direct route).
#[no_mangle]
pub unsafe extern "C" fn qw_sampler_run(
    sampler: *const QwSampler,
    route: QwRoute,
    n_paths: usize,
    zeta: *mut f64,
    clock: *mut f64,
) -> QwStatus {
    guard(|| {
        let s = sampler.as_ref().ok_or_else(|| null("sampler"))?;
        if zeta.is_null() && n_paths > 0 {
            return Err(null("zeta"));
        }
        let samples = lib(match route {
            QwRoute::Timechange => simulate_timechange(&s.geometry, s.horizon, n_paths, &s.policy, s.key),
            QwRoute::Direct => simulate_direct(&s.geometry, s.horizon, &s.policy, n_paths, s.key),
        })?;
        for (i, x) in samples.iter().enumerate() {
            let z = x.zeta.to_array();
            for (k, v) in z.iter().enumerate() {
                *zeta.add(3 * i + k) = *v;
            }
            if !clock.is_null() {
                *clock.add(i) = x.clock.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qw_sampler_free(sampler: *mut QwSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Closed-form flat characteristic function (real, depends on `|lambda|`).
#[no_mangle]
pub unsafe extern "C" fn qw_cf_flat_exact(lambda_norm: f64, t: f64, rho: f64, out: *mut f64) -> QwStatus {
    guard(|| write(out, lib(cf_flat_exact_norm(lambda_norm, t, rho))?))
}

/// Long-time hyperbolic characteristic function.
#[no_mangle]
pub unsafe extern "C" fn qw_cf_hh1_limit(lambda_norm: f64, r0: f64, out: *mut f64) -> QwStatus {
    guard(|| {
        let e = lib(cf_hh1_limit(WindingVector::along_i(lambda_norm), r0))?;
        write(out, e.value.re)
    })
}

/// `E[cosh^2 r(t)]` for the hyperbolic Jacobi diffusion.
#[no_mangle]
pub unsafe extern "C" fn qw_cosh2_moment(alpha: f64, beta: f64, r0: f64, t: f64, out: *mut f64) -> QwStatus {
    guard(|| write(out, lib(cosh2_moment(alpha, beta, r0, t))?))
}

/// Long-time hyperbolic winding density at a point of norm `rho`.
#[no_mangle]
pub unsafe extern "C" fn qw_hh1_limit_density(rho: f64, r0: f64, out: *mut f64) -> QwStatus {
    guard(|| write(out, lib(hh1_limit_density_radial(rho, r0))?))
}

/// Relativistic Cauchy density on R^3 at a point of norm `rho`.
#[no_mangle]
pub unsafe extern "C" fn qw_relativistic_cauchy_density(rho: f64, y: f64, out: *mut f64) -> QwStatus {
    guard(|| write(out, lib(relativistic_cauchy_radial(rho, y))?))
}

/// Runs the comparison suite for a JSON config. `*report_json` receives a
/// string to release with [`qw_string_free`]; `*all_passed` is 1 or 0.
#[no_mangle]
pub unsafe extern "C" fn qw_verify(
    config_json: *const c_char,
    report_json: *mut *mut c_char,
    all_passed: *mut i32,
) -> QwStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if report_json.is_null() || all_passed.is_null() {
            return Err(null("output pointer"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| (QwStatus::InvalidArgument, e.to_string()))?;
        let cfg = lib(RunConfig::from_json(text))?;
        let report = lib(run_verify(&cfg))?;
        let json = lib(report.to_json())?;
        let c = CString::new(json).map_err(|e| (QwStatus::InvalidArgument, e.to_string()))?;
        *all_passed = report.all_passed() as i32;
        *report_json = c.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
