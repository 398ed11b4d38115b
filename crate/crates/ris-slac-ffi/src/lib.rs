//! C ABI over the ris-slac library.
//!
//! Every fallible call returns an [`RsStatus`]. On failure a message is kept
//! per thread and can be copied out with [`rs_last_error_message`]. Objects
//! are opaque handles created by `*_new`/`*_load`/`*_run` and released by the
//! matching `*_free`.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the documented number of
//! elements, strings must be NUL-terminated, and handles must come from this
//! library and not be used after `*_free`. Null pointers are reported as
//! `RS_STATUS_NULL_POINTER`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ris_slac::config::parse_config;
use ris_slac::estimation::UnfoldedEstimator;
use ris_slac::experiments::{effective_se, run_tradeoff_sweep, TradeoffPoint, TradeoffPolicy};
use ris_slac::geometry::{ArraySpec, Wavelength};
use ris_slac::localization::SisoLocModel;
use ris_slac::ris_control::{training_profiles, PolicyKind, Prior, ProfilePolicy};
use ris_slac::{Error, Point3, C64};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Io = 5,
    Config = 6,
    Geometry = 7,
    Internal = 8,
}

/// Pilot profile policy of a tradeoff point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsPolicy {
    Random = 0,
    Directional = 1,
}

/// One row of a tradeoff sweep. `peb_m` is infinite when the Fisher
/// information is singular.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsTradeoffPoint {
    pub ris_elements: usize,
    pub policy: RsPolicy,
    pub t_p: usize,
    pub peb_m: f64,
    pub eff_se_bits: f64,
}

/// SISO localization model with its pilot slots.
pub struct RsLocModel {
    model: SisoLocModel,
    bs: Point3,
}

/// Trained or hand-set unfolded estimator parameters.
pub struct RsUnfolded {
    inner: UnfoldedEstimator,
}

/// Result table of a tradeoff sweep.
pub struct RsTradeoff {
    points: Vec<TradeoffPoint>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::InvalidArgument(_) | Error::EmptyDataset | Error::ZeroTruth | Error::BudgetExceeded { .. } | Error::MissingPrior(_) => RsStatus::InvalidArgument,
        Error::DimensionMismatch(_) | Error::RankDeficient { .. } => RsStatus::DimensionMismatch,
        Error::Parse(_) => RsStatus::Parse,
        Error::Io(_) => RsStatus::Io,
        Error::InvalidArray(_) | Error::SourceOnArray { .. } | Error::DegenerateGeometry(_) => RsStatus::Geometry,
        _ => RsStatus::Internal,
    }
}

struct Fail(RsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RsStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            RsStatus::Internal
        }
    }
}

unsafe fn point(p: *const f64, what: &str) -> Result<Point3, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Point3::new(s[0], s[1], s[2]))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, so a
/// caller can size the buffer by passing `len = 0`.
#[no_mangle]
pub unsafe extern "C" fn rs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// (1 − t_p/t_c)·log2(1 + snr_linear).
#[no_mangle]
pub unsafe extern "C" fn rs_effective_se(snr_linear: f64, t_p: usize, t_c: usize, out: *mut f64) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = effective_se(snr_linear, t_p, t_c)?;
        Ok(())
    })
}

/// Builds a SISO model with a square `ris_side`×`ris_side` RIS centred at
/// `ris_center`, unit direct and RIS gains, unit power and noise variance
/// `10^(-element_snr_db/10)`. Positions are 3-vectors in meters.
#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_new(
    bs: *const f64,
    user: *const f64,
    ris_center: *const f64,
    ris_side: usize,
    spacing_m: f64,
    wavelength_m: f64,
    element_snr_db: f64,
    out: *mut *mut RsLocModel,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (bs, user, center) = (point(bs, "bs")?, point(user, "user")?, point(ris_center, "ris_center")?);
        if !element_snr_db.is_finite() {
            return Err(Fail(RsStatus::InvalidArgument, format!("element SNR {element_snr_db} dB")));
        }
        let wl = Wavelength::from_lambda(wavelength_m)?;
        let ris = ArraySpec::upa(ris_side, ris_side, spacing_m)?.with_reference(center);
        let one = C64::new(1.0, 0.0);
        let noise = 10f64.powf(-element_snr_db / 10.0);
        let model = SisoLocModel::new(bs, ris, user, wl, Some(one), one, 1.0, noise)?;
        store(out, RsLocModel { model, bs });
        Ok(())
    })
}

/// Appends `count` slots with uniformly random RIS phases.
#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_add_random_slots(model: *mut RsLocModel, count: usize, seed: u64) -> RsStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let profiles = training_profiles(&ProfilePolicy::random(), count, m.model.ris(), m.model.wavelength(), seed)?.profiles;
        m.model.push_slots(profiles, vec![C64::new(1.0, 0.0); count])?;
        Ok(())
    })
}

/// Appends `count` slots focused on points drawn in a ball of `radius_m`
/// around `prior`, with elementwise phase dither of `dither_rad`.
#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_add_focused_slots(
    model: *mut RsLocModel,
    count: usize,
    prior: *const f64,
    radius_m: f64,
    dither_rad: f64,
    seed: u64,
) -> RsStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let prior = Prior {
            position: point(prior, "prior")?,
            uncertainty_radius: radius_m,
        };
        let policy = ProfilePolicy::focused(PolicyKind::Positional, m.bs, prior, dither_rad);
        let profiles = training_profiles(&policy, count, m.model.ris(), m.model.wavelength(), seed)?.profiles;
        m.model.push_slots(profiles, vec![C64::new(1.0, 0.0); count])?;
        Ok(())
    })
}

/// Number of pilot slots, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_slot_count(model: *const RsLocModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.slot_count())
}

/// Position error bound in meters over all slots. A positive `prior_sigma_m`
/// adds isotropic prior information on the position; pass 0 for none.
/// Singular information yields infinity with status Ok.
#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_peb(model: *const RsLocModel, prior_sigma_m: f64, out: *mut f64) -> RsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(prior_sigma_m >= 0.0 && prior_sigma_m.is_finite()) {
            return Err(Fail(RsStatus::InvalidArgument, format!("prior sigma {prior_sigma_m}")));
        }
        let fim = m.model.fim();
        let fim = if prior_sigma_m > 0.0 { fim.with_position_prior(prior_sigma_m) } else { fim };
        *out = fim.peb;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rs_loc_model_free(model: *mut RsLocModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Creates an estimator from `depth` step sizes and thresholds.
#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_new(depth: usize, alphas: *const f64, lambdas: *const f64, out: *mut *mut RsUnfolded) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (a, l) = if depth == 0 {
            (Vec::new(), Vec::new())
        } else {
            if alphas.is_null() || lambdas.is_null() {
                return Err(null("parameter array"));
            }
            (
                std::slice::from_raw_parts(alphas, depth).to_vec(),
                std::slice::from_raw_parts(lambdas, depth).to_vec(),
            )
        };
        store(
            out,
            RsUnfolded {
                inner: UnfoldedEstimator::new(a, l)?,
            },
        );
        Ok(())
    })
}

/// Reads parameters written by [`rs_unfolded_save`] or the library.
#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_load(path: *const c_char, out: *mut *mut RsUnfolded) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = UnfoldedEstimator::load(std::path::Path::new(text(path, "path")?))?;
        store(out, RsUnfolded { inner });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_save(est: *const RsUnfolded, path: *const c_char) -> RsStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("estimator"))?;
        e.inner.save(std::path::Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Layer count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_depth(est: *const RsUnfolded) -> usize {
    est.as_ref().map_or(0, |e| e.inner.depth())
}

/// Copies the parameters into caller arrays of length `len`, which must
/// equal the depth.
#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_params(est: *const RsUnfolded, alphas: *mut f64, lambdas: *mut f64, len: usize) -> RsStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("estimator"))?;
        if len != e.inner.depth() {
            return Err(Fail(RsStatus::DimensionMismatch, format!("buffer length {len} for depth {}", e.inner.depth())));
        }
        if len == 0 {
            return Ok(());
        }
        if alphas.is_null() || lambdas.is_null() {
            return Err(null("output array"));
        }
        ptr::copy_nonoverlapping(e.inner.alphas().as_ptr(), alphas, len);
        ptr::copy_nonoverlapping(e.inner.lambdas().as_ptr(), lambdas, len);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rs_unfolded_free(est: *mut RsUnfolded) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Runs the tradeoff sweep described by a TOML run configuration.
/// Configuration problems return `Config` with the offending key in the
/// error message.
#[no_mangle]
pub unsafe extern "C" fn rs_tradeoff_run(config_toml: *const c_char, out: *mut *mut RsTradeoff) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = parse_config(text(config_toml, "config")?)
            .and_then(|c| c.tradeoff())
            .map_err(|e| Fail(RsStatus::Config, e.to_string()))?;
        store(
            out,
            RsTradeoff {
                points: run_tradeoff_sweep(&cfg)?,
            },
        );
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rs_tradeoff_len(result: *const RsTradeoff) -> usize {
    result.as_ref().map_or(0, |r| r.points.len())
}

#[no_mangle]
pub unsafe extern "C" fn rs_tradeoff_point(result: *const RsTradeoff, index: usize, out: *mut RsTradeoffPoint) -> RsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = r
            .points
            .get(index)
            .ok_or_else(|| Fail(RsStatus::InvalidArgument, format!("index {index} of {}", r.points.len())))?;
        *out = RsTradeoffPoint {
            ris_elements: p.ris_elements,
            policy: match p.policy {
                TradeoffPolicy::Random => RsPolicy::Random,
                TradeoffPolicy::Directional => RsPolicy::Directional,
            },
            t_p: p.t_p,
            peb_m: p.peb,
            eff_se_bits: p.eff_se,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rs_tradeoff_free(result: *mut RsTradeoff) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
