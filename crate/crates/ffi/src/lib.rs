//! C ABI over `gsm-hbt`.
//!
//! Every function returns a [`GsmStatus`] and writes its results through out
//! pointers. Models and ensembles are opaque handles created by
//! `gsm_*_new` and released with the matching `gsm_*_free`. After a failure,
//! [`gsm_last_error_message`] returns a description of the error on the
//! calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use gsm_hbt::gsm::{self, IndexWindow, ModeIndex, ModeSpectrum, Normalization, SchellModel};
use gsm_hbt::hbt::{self, DetectionOptics, ModeFilter};
use gsm_hbt::metrics;
use gsm_hbt::speckle::{Dimensionality, Ensemble, EnsembleConfig};
use gsm_hbt::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsmStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    OrderOverflow = 3,
    Numerical = 4,
    ZeroPower = 5,
    NonConvergence = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 9,
}

/// Opaque Gaussian Schell-model source.
pub struct GsmModel {
    inner: SchellModel,
}

/// Opaque Monte Carlo field ensemble.
pub struct GsmEnsemble {
    inner: Ensemble,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GsmStatus {
    match err {
        Error::InvalidParameter { .. }
        | Error::Config(_)
        | Error::MissingIndex { .. }
        | Error::IndexMismatch(_)
        | Error::InsufficientSamples { .. } => GsmStatus::InvalidArgument,
        Error::OrderOverflow { .. } => GsmStatus::OrderOverflow,
        Error::ZeroMeanPower { .. } => GsmStatus::ZeroPower,
        Error::NonConvergence { .. } => GsmStatus::NonConvergence,
        Error::Io(_) | Error::Format { .. } | Error::Locked(_) => GsmStatus::Io,
        _ => GsmStatus::Numerical,
    }
}

enum Failure {
    Status(GsmStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(name: &str) -> Failure {
    Failure::Status(GsmStatus::NullPointer, format!("`{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GsmStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            GsmStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, name: &str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn model_ref<'a>(model: *const GsmModel) -> Result<&'a SchellModel, Failure> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn ensemble_ref<'a>(ensemble: *const GsmEnsemble) -> Result<&'a Ensemble, Failure> {
    ensemble.as_ref().map(|e| &e.inner).ok_or_else(|| null("ensemble"))
}

unsafe fn input<'a>(data: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a>(data: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size needed for the full
/// message, or 0 when there is no error.
#[no_mangle]
pub unsafe extern "C" fn gsm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn gsm_model_new(
    sigma_i: f64,
    sigma_mu: f64,
    wavelength: f64,
    out: *mut *mut GsmModel,
) -> GsmStatus {
    guard(|| {
        let inner = SchellModel::new(sigma_i, sigma_mu, wavelength)?;
        write(out, "out", Box::into_raw(Box::new(GsmModel { inner })))
    })
}

/// Model with `sigma_mu = beta * sigma_i`.
#[no_mangle]
pub unsafe extern "C" fn gsm_model_from_beta(
    sigma_i: f64,
    beta: f64,
    wavelength: f64,
    out: *mut *mut GsmModel,
) -> GsmStatus {
    guard(|| {
        let inner = SchellModel::from_beta(sigma_i, beta, wavelength)?;
        write(out, "out", Box::into_raw(Box::new(GsmModel { inner })))
    })
}

/// Releases a model. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gsm_model_free(model: *mut GsmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gsm_model_kernel_params(
    model: *const GsmModel,
    a: *mut f64,
    b: *mut f64,
    c: *mut f64,
) -> GsmStatus {
    guard(|| {
        let p = model_ref(model)?.kernel_params();
        write(a, "a", p.a)?;
        write(b, "b", p.b)?;
        write(c, "c", p.c)
    })
}

/// 1D eigenvalue `λ_n`.
#[no_mangle]
pub unsafe extern "C" fn gsm_model_eigenvalue(model: *const GsmModel, n: usize, out: *mut f64) -> GsmStatus {
    guard(|| write(out, "out", gsm::eigenvalue(model_ref(model)?, n)))
}

/// `λ_n / λ_0` from the coherence ratio alone.
#[no_mangle]
pub unsafe extern "C" fn gsm_eigenvalue_ratio(beta: f64, n: usize, out: *mut f64) -> GsmStatus {
    guard(|| write(out, "out", gsm::eigenvalue_ratio(beta, n)?))
}

/// Normalized Hermite-Gaussian mode `φ_n(x)` with waist parameter `c`.
#[no_mangle]
pub unsafe extern "C" fn gsm_hg_mode(c: f64, n: usize, x: f64, out: *mut f64) -> GsmStatus {
    guard(|| write(out, "out", gsm::hg_mode(c, n, x)?))
}

/// First-order coherence `G¹(x1, x2)`.
#[no_mangle]
pub unsafe extern "C" fn gsm_g1_kernel(model: *const GsmModel, x1: f64, x2: f64, out: *mut f64) -> GsmStatus {
    guard(|| write(out, "out", gsm::g1_kernel(model_ref(model)?, x1, x2)))
}

#[no_mangle]
pub unsafe extern "C" fn gsm_matched_focal_length(
    model: *const GsmModel,
    fiber_waist: f64,
    out: *mut f64,
) -> GsmStatus {
    guard(|| write(out, "out", hbt::matched_focal_length(model_ref(model)?, fiber_waist)?))
}

/// Analytic `g²` of an ideal projector onto `(m, n)` against a fiber
/// displaced by each of `displacements` along x. `c_det <= 0` selects the
/// mode-matched fiber.
#[no_mangle]
pub unsafe extern "C" fn gsm_g2_scan(
    model: *const GsmModel,
    m: usize,
    n: usize,
    displacements: *const f64,
    len: usize,
    c_det: f64,
    out: *mut f64,
) -> GsmStatus {
    guard(|| {
        let model = model_ref(model)?;
        let rs = input(displacements, len, "displacements")?;
        let dst = output(out, len, "out")?;
        let c_det = (c_det > 0.0).then_some(c_det);
        let curve = hbt::g2_scan(model, ModeIndex::new(m, n), rs, c_det)?;
        for (d, p) in dst.iter_mut().zip(&curve.points) {
            *d = p.g2;
        }
        Ok(())
    })
}

/// Participation ratio `(Σλ)² / Σλ²`.
#[no_mangle]
pub unsafe extern "C" fn gsm_schmidt_number(values: *const f64, len: usize, out: *mut f64) -> GsmStatus {
    guard(|| write(out, "out", metrics::participation_ratio(input(values, len, "values")?)?))
}

/// Fidelity between two non-negative spectra listed in the same index order.
#[no_mangle]
pub unsafe extern "C" fn gsm_fidelity(
    experiment: *const f64,
    theory: *const f64,
    len: usize,
    out: *mut f64,
) -> GsmStatus {
    guard(|| {
        if len == 0 {
            return Err(Failure::Status(GsmStatus::InvalidArgument, "empty spectra".into()));
        }
        let as_spectrum = |v: &[f64]| {
            ModeSpectrum::from_values(
                1.0,
                Normalization::Raw,
                v.iter().enumerate().map(|(k, x)| (ModeIndex::new(k, 0), *x)),
            )
        };
        let e = as_spectrum(input(experiment, len, "experiment")?)?;
        let t = as_spectrum(input(theory, len, "theory")?)?;
        let window = IndexWindow::Rect {
            max_m: len - 1,
            max_n: 0,
        };
        write(out, "out", metrics::fidelity_window(&e, &t, window)?)
    })
}

/// Thermal ensemble of `realizations` fields; `dims` is 1 or 2.
#[no_mangle]
pub unsafe extern "C" fn gsm_ensemble_new(
    model: *const GsmModel,
    realizations: usize,
    seed: u64,
    dims: u32,
    out: *mut *mut GsmEnsemble,
) -> GsmStatus {
    guard(|| {
        let model = *model_ref(model)?;
        let dims = match dims {
            1 => Dimensionality::One,
            2 => Dimensionality::Two,
            d => {
                return Err(Failure::Status(
                    GsmStatus::InvalidArgument,
                    format!("dims must be 1 or 2, got {d}"),
                ))
            }
        };
        let inner = Ensemble::new(model, EnsembleConfig::for_model(&model, realizations, seed), dims)?;
        write(out, "out", Box::into_raw(Box::new(GsmEnsemble { inner })))
    })
}

/// Releases an ensemble. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gsm_ensemble_free(ensemble: *mut GsmEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Number of complex samples in one field realization.
#[no_mangle]
pub unsafe extern "C" fn gsm_ensemble_field_len(ensemble: *const GsmEnsemble, out: *mut usize) -> GsmStatus {
    guard(|| {
        let e = ensemble_ref(ensemble)?;
        let n = e.config().grid.points();
        let len = match e.dims() {
            Dimensionality::One => n,
            Dimensionality::Two => n * n,
        };
        write(out, "out", len)
    })
}

/// Writes realization `index` as separate real and imaginary arrays of
/// length `len`, which must be at least `gsm_ensemble_field_len`.
#[no_mangle]
pub unsafe extern "C" fn gsm_ensemble_sample_field(
    ensemble: *const GsmEnsemble,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> GsmStatus {
    guard(|| {
        let e = ensemble_ref(ensemble)?;
        let field = e.sample_field(index);
        if len < field.amplitudes.len() {
            return Err(Failure::Status(
                GsmStatus::BufferTooSmall,
                format!("need {} samples, got {len}", field.amplitudes.len()),
            ));
        }
        let (re, im) = (output(re, len, "re")?, output(im, len, "im")?);
        for (k, z) in field.amplitudes.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// Monte Carlo `g²` between ideal projectors onto `(m1, n1)` and `(m2, n2)`.
#[no_mangle]
pub unsafe extern "C" fn gsm_ensemble_g2_ideal(
    ensemble: *const GsmEnsemble,
    m1: usize,
    n1: usize,
    m2: usize,
    n2: usize,
    value: *mut f64,
    stderr: *mut f64,
) -> GsmStatus {
    guard(|| {
        let e = ensemble_ref(ensemble)?;
        let optics = DetectionOptics::matched(e.model(), 1.0)?;
        let est = hbt::g2_monte_carlo(e, &ModeFilter::ideal(m1, n1), &ModeFilter::ideal(m2, n2), &optics)?;
        write(value, "value", est.value)?;
        write(stderr, "stderr", est.stderr)
    })
}
