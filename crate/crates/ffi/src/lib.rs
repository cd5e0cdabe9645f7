//! C ABI over `anchorroute`.
//!
//! Objects are opaque handles created by `ar_*_load` / `ar_fit` and released
//! with the matching `ar_*_free`. Every fallible call returns an [`ArStatus`];
//! on failure `ar_last_error_message` describes the error for the calling
//! thread until its next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use anchorroute::cnpsl::{self, logit, FitOptions, FitResult, ModelSpec, Params, ScaleMode};
use anchorroute::features::{Dataset, ModelVariant, RouteFeatures};
use anchorroute::netgraph::{io::load_network, RoadNetwork};
use anchorroute::pipeline::artifacts::read_features;
use anchorroute::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    InvalidInput = 6,
    Config = 7,
    Panic = 8,
}

/// Scale parameterization for `ar_fit`.
pub const AR_SCALE_FIXED: c_int = 0;
pub const AR_SCALE_SHARED: c_int = 1;
pub const AR_SCALE_PER_NEST: c_int = 2;

pub struct ArNetwork(RoadNetwork);

pub struct ArDataset(Dataset);

pub struct ArFitResult(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ArStatus {
    match e {
        Error::Io { .. } => ArStatus::Io,
        Error::Parse { .. } | Error::Json(_) => ArStatus::Parse,
        Error::Config(_) => ArStatus::Config,
        Error::Stage { source, .. } => status_of(source),
        _ => ArStatus::InvalidInput,
    }
}

struct Fail(ArStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ArStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ArStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ArStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ArStatus::InvalidUtf8, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    check_out(out)?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the calling thread's last failure, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a network file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_network_load(path: *const c_char, out: *mut *mut ArNetwork) -> ArStatus {
    guard(|| {
        check_out(out)?;
        let net = load_network(path_arg(path)?)?;
        put(out, ArNetwork(net))
    })
}

/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_network_node_count(net: *const ArNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.node_count())
}

/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_network_edge_count(net: *const ArNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.edge_count())
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_network_free(net: *mut ArNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Load a features table written by the `features` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_load(path: *const c_char, out: *mut *mut ArDataset) -> ArStatus {
    guard(|| {
        check_out(out)?;
        let data = read_features(&path_arg(path)?)?;
        put(out, ArDataset(data))
    })
}

/// Restrict a full dataset to model variant 1..=4 as a new handle.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_project(data: *const ArDataset, variant: c_int, out: *mut *mut ArDataset) -> ArStatus {
    guard(|| {
        check_out(out)?;
        let data = handle(data, "dataset")?;
        let v = ModelVariant::ALL
            .into_iter()
            .find(|v| c_int::from(v.number()) == variant)
            .ok_or_else(|| Fail(ArStatus::InvalidArgument, format!("unknown variant {variant}")))?;
        put(out, ArDataset(data.0.project(v)?))
    })
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_observation_count(data: *const ArDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.observations.len())
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_feature_count(data: *const ArDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.feature_names.len())
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_free(data: *mut ArDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Maximum-likelihood fit of a dataset with one of the `AR_SCALE_*` modes.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_fit(data: *const ArDataset, scale: c_int, out: *mut *mut ArFitResult) -> ArStatus {
    guard(|| {
        check_out(out)?;
        let data = handle(data, "dataset")?;
        let scale = match scale {
            AR_SCALE_FIXED => ScaleMode::Fixed,
            AR_SCALE_SHARED => ScaleMode::Shared,
            AR_SCALE_PER_NEST => ScaleMode::PerNest,
            s => return Err(Fail(ArStatus::InvalidArgument, format!("unknown scale mode {s}"))),
        };
        let opts = FitOptions {
            scale,
            ..FitOptions::default()
        };
        let spec = ModelSpec::for_dataset(&data.0, scale);
        put(out, ArFitResult(cnpsl::fit(&data.0, &spec, &opts)?))
    })
}

/// # Safety
/// `fit` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_param_count(fit: *const ArFitResult) -> usize {
    fit.as_ref().map_or(0, |f| f.0.estimates.len())
}

/// # Safety
/// `fit` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_log_likelihood(fit: *const ArFitResult) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.log_likelihood)
}

/// # Safety
/// `fit` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_converged(fit: *const ArFitResult) -> bool {
    fit.as_ref().is_some_and(|f| f.0.converged)
}

/// Copy estimates and standard errors (NaN where unidentified) into buffers
/// of `len` elements; `len` must equal the parameter count. `std_errors`
/// may be NULL.
///
/// # Safety
/// Buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_estimates(
    fit: *const ArFitResult,
    estimates: *mut f64,
    std_errors: *mut f64,
    len: usize,
) -> ArStatus {
    guard(|| {
        let f = &handle(fit, "fit result")?.0;
        if len != f.estimates.len() {
            return Err(Fail(
                ArStatus::InvalidArgument,
                format!("buffer holds {len} values, fit has {}", f.estimates.len()),
            ));
        }
        if estimates.is_null() {
            return Err(null("estimates"));
        }
        std::slice::from_raw_parts_mut(estimates, len).copy_from_slice(&f.estimates);
        if !std_errors.is_null() {
            let se = std::slice::from_raw_parts_mut(std_errors, len);
            for (dst, s) in se.iter_mut().zip(&f.std_errors) {
                *dst = s.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Whole fit result as JSON; release with `ar_string_free`.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_json(fit: *const ArFitResult, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        check_out(out)?;
        let f = handle(fit, "fit result")?;
        let json = serde_json::to_string(&f.0).map_err(Error::from)?;
        *out = CString::new(json)
            .map_err(|_| Fail(ArStatus::InvalidInput, "JSON contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_fit_result_free(fit: *mut ArFitResult) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Choice probabilities of one choice set.
///
/// `x` is row-major `n_routes × n_features`, `ln_ps` has one entry per route
/// and `alpha` is row-major `n_routes × n_nests` with rows summing to one.
/// `mu` holds one scale in (0, 1) per nest, or is NULL for unit scales.
/// Results go to `probs` (`n_routes` doubles).
///
/// # Safety
/// Every array must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ar_choice_probabilities(
    n_routes: usize,
    n_features: usize,
    n_nests: usize,
    x: *const f64,
    ln_ps: *const f64,
    alpha: *const f64,
    beta: *const f64,
    beta_ps: f64,
    mu: *const f64,
    probs: *mut f64,
) -> ArStatus {
    guard(|| {
        if n_routes == 0 || n_nests == 0 {
            return Err(Fail(ArStatus::InvalidArgument, "need at least one route and one nest".into()));
        }
        let cells = |a: usize, b: usize| {
            a.checked_mul(b)
                .ok_or_else(|| Fail(ArStatus::InvalidArgument, "array size overflows".into()))
        };
        let x = slice_arg(x, cells(n_routes, n_features)?, "x")?;
        let ln_ps = slice_arg(ln_ps, n_routes, "ln_ps")?;
        let alpha = slice_arg(alpha, cells(n_routes, n_nests)?, "alpha")?;
        let beta = slice_arg(beta, n_features, "beta")?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let routes: Vec<RouteFeatures> = (0..n_routes)
            .map(|i| RouteFeatures {
                x: x[i * n_features..(i + 1) * n_features].to_vec(),
                ln_ps: ln_ps[i],
                alpha: alpha[i * n_nests..(i + 1) * n_nests]
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(m, a)| (m as u32, *a))
                    .collect(),
            })
            .collect();
        let (scale, theta) = if mu.is_null() {
            (ScaleMode::Fixed, Vec::new())
        } else {
            let mu = slice_arg(mu, n_nests, "mu")?;
            if let Some(m) = mu.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
                return Err(Fail(ArStatus::InvalidArgument, format!("scale {m} outside (0, 1)")));
            }
            (ScaleMode::PerNest, mu.iter().map(|&m| logit(m)).collect())
        };
        let spec = ModelSpec {
            feature_names: (0..n_features).map(|k| format!("x{k}")).collect(),
            n_nests,
            scale,
            variant: None,
            weight_by_multiplicity: false,
        };
        let params = Params {
            beta: beta.to_vec(),
            beta_ps,
            theta,
        };
        let p = cnpsl::choice_probabilities(&routes, &params, &spec)?;
        std::slice::from_raw_parts_mut(probs, n_routes).copy_from_slice(&p);
        Ok(())
    })
}
