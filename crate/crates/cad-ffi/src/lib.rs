//! C ABI for the cad-core library: the noise-model math, checkpoint
//! loading and sampling behind an opaque handle, plus the collapse probe.
//!
//! Conventions: every fallible function returns a `cad_status` code and
//! writes results through out-pointers; `cad_last_error` returns a
//! thread-local message for the most recent failure; handles are created
//! and released only through this API. The header `include/cad.h` is
//! maintained by hand and must stay in sync.

use cad_core::cli::commands::load_model;
use cad_core::denoiser::{collapse_probe, Denoiser};
use cad_core::diffusion::{sample, GuidanceMode, GuidanceSpec, NoiseSchedule};
use cad_core::noisesim::{alpha_max, entropy_of_alpha, invert_entropy, target_entropy_cdf};
use cad_core::toydata::Standardizer;
use libc::{c_char, c_double, c_int, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

pub const CAD_OK: c_int = 0;
pub const CAD_ERR_INVALID_ARG: c_int = 1;
pub const CAD_ERR_IO: c_int = 2;
pub const CAD_ERR_CONTRACT: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(code: c_int, msg: &str) -> c_int {
    set_error(msg);
    code
}

/// Message for the most recent error on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Largest valid error probability (N−1)/N.
#[no_mangle]
pub extern "C" fn cad_alpha_max(n_classes: size_t, out: *mut c_double) -> c_int {
    if out.is_null() {
        return fail(CAD_ERR_INVALID_ARG, "out pointer is null");
    }
    if n_classes < 2 {
        return fail(CAD_ERR_INVALID_ARG, "need at least 2 classes");
    }
    unsafe { *out = alpha_max(n_classes) };
    CAD_OK
}

/// Normalized flip entropy E(alpha).
#[no_mangle]
pub extern "C" fn cad_entropy_of_alpha(
    alpha: c_double,
    n_classes: size_t,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        return fail(CAD_ERR_INVALID_ARG, "out pointer is null");
    }
    if n_classes < 2 {
        return fail(CAD_ERR_INVALID_ARG, "need at least 2 classes");
    }
    if !(0.0..=alpha_max(n_classes)).contains(&alpha) {
        return fail(CAD_ERR_INVALID_ARG, "alpha outside [0, (N-1)/N]");
    }
    unsafe { *out = entropy_of_alpha(alpha, n_classes) };
    CAD_OK
}

/// Inverse of the normalized entropy by bisection.
#[no_mangle]
pub extern "C" fn cad_invert_entropy(
    u: c_double,
    n_classes: size_t,
    tol: c_double,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        return fail(CAD_ERR_INVALID_ARG, "out pointer is null");
    }
    match invert_entropy(u, n_classes, tol) {
        Ok(a) => {
            unsafe { *out = a };
            CAD_OK
        }
        Err(e) => fail(CAD_ERR_CONTRACT, &e.to_string()),
    }
}

/// Piecewise-linear target-entropy CDF.
#[no_mangle]
pub extern "C" fn cad_target_entropy_cdf(
    t: c_double,
    beta: c_double,
    kappa: c_double,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        return fail(CAD_ERR_INVALID_ARG, "out pointer is null");
    }
    if !(0.0..=1.0).contains(&t) {
        return fail(CAD_ERR_INVALID_ARG, "t outside [0, 1]");
    }
    if !(beta > 0.0 && beta < 1.0 && kappa > 0.0 && kappa < 1.0) {
        return fail(CAD_ERR_INVALID_ARG, "beta and kappa must lie in (0, 1)");
    }
    unsafe { *out = target_entropy_cdf(t, beta, kappa) };
    CAD_OK
}

/// Opaque trained-model handle.
pub struct CadModel {
    model: Denoiser,
    std: Standardizer,
}

/// Load a checkpoint written by the `cad` CLI. Returns null on failure;
/// see `cad_last_error`.
#[no_mangle]
pub extern "C" fn cad_model_load(path: *const c_char) -> *mut CadModel {
    if path.is_null() {
        set_error("path is null");
        return std::ptr::null_mut();
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match load_model(Path::new(path)) {
        Ok((model, std)) => Box::into_raw(Box::new(CadModel { model, std })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a model handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn cad_model_free(handle: *mut CadModel) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of classes the model was trained on.
#[no_mangle]
pub extern "C" fn cad_model_n_classes(handle: *const CadModel) -> size_t {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.model.config.n_classes
}

/// DDIM/DDPM sampling in data space. `labels` has `n` entries; `out_xy`
/// receives `2·n` doubles (x0, x1 per sample, row-major). Guidance mode:
/// 0 = none, 1 = cfg, 2 = ca-cfg.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn cad_model_sample(
    handle: *const CadModel,
    n: size_t,
    steps: size_t,
    labels: *const size_t,
    coherence: c_double,
    eta: c_double,
    guidance_mode: c_int,
    omega: c_double,
    seed: u64,
    out_xy: *mut c_double,
) -> c_int {
    if handle.is_null() || (n > 0 && (labels.is_null() || out_xy.is_null())) {
        return fail(CAD_ERR_INVALID_ARG, "null pointer argument");
    }
    if steps == 0 {
        return fail(CAD_ERR_INVALID_ARG, "steps must be positive");
    }
    if !(0.0..=1.0).contains(&coherence) || !(0.0..=1.0).contains(&eta) {
        return fail(CAD_ERR_INVALID_ARG, "coherence and eta must lie in [0, 1]");
    }
    let mode = match guidance_mode {
        0 => GuidanceMode::None,
        1 => GuidanceMode::Cfg,
        2 => GuidanceMode::CaCfg,
        _ => return fail(CAD_ERR_INVALID_ARG, "guidance_mode must be 0, 1 or 2"),
    };
    let h = unsafe { &*handle };
    let labels = unsafe { std::slice::from_raw_parts(labels, n) };
    let spec = GuidanceSpec { mode, omega };
    if let Err(e) = spec.validate(&h.model) {
        return fail(CAD_ERR_CONTRACT, &e.to_string());
    }
    let x = match sample(
        &h.model,
        steps,
        labels,
        coherence,
        &spec,
        eta,
        NoiseSchedule::Cosine,
        seed,
    ) {
        Ok(x) => x,
        Err(e) => return fail(CAD_ERR_CONTRACT, &e.to_string()),
    };
    let out = unsafe { std::slice::from_raw_parts_mut(out_xy, 2 * n) };
    for i in 0..n {
        let p = h.std.invert([x.data()[2 * i], x.data()[2 * i + 1]]);
        out[2 * i] = p[0];
        out[2 * i + 1] = p[1];
    }
    CAD_OK
}

/// Mean pairwise condition-embedding distance at coherence 0 divided by
/// the same quantity at coherence 1.
#[no_mangle]
pub extern "C" fn cad_model_collapse_ratio(handle: *const CadModel, out: *mut c_double) -> c_int {
    if handle.is_null() || out.is_null() {
        return fail(CAD_ERR_INVALID_ARG, "null pointer argument");
    }
    let h = unsafe { &*handle };
    match collapse_probe(&h.model, &[0.0, 1.0]) {
        Ok(rows) => {
            let d1 = rows[1].1;
            if d1 <= 0.0 {
                return fail(CAD_ERR_CONTRACT, "degenerate embedding spread at c = 1");
            }
            unsafe { *out = rows[0].1 / d1 };
            CAD_OK
        }
        Err(e) => fail(CAD_ERR_CONTRACT, &e.to_string()),
    }
}
