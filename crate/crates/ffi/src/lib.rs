//! C ABI for `fchmrf`.
//!
//! Every function returns an [`FchmrfStatus`]. On failure, a description is
//! kept per thread and can be read with [`fchmrf_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use fchmrf::em::{AdamW, EmConfig, DEFAULT_PAIR_BUDGET};
use fchmrf::lattice::{PermutohedralLattice, PositionMatrix, ValueChannels};
use fchmrf::pipeline::{run_pipeline, PipelineResult};
use fchmrf::testing::{bh_test, lis_test, LisVolume};
use fchmrf::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FchmrfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Numerical = 5,
    Io = 6,
    TooLarge = 7,
    Panic = 8,
}

impl From<&Error> for FchmrfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => FchmrfStatus::DimensionMismatch,
            Error::NonFinite { .. } => FchmrfStatus::NonFinite,
            Error::TooLarge { .. } => FchmrfStatus::TooLarge,
            Error::Io { .. } | Error::LengthMismatch { .. } | Error::Header { .. } => {
                FchmrfStatus::Io
            }
            Error::DegenerateDensity { .. }
            | Error::ZeroVariance { .. }
            | Error::ZeroWeights
            | Error::ZeroBandwidth
            | Error::NonFiniteLoss { .. } => FchmrfStatus::Numerical,
            Error::Em { source, .. } | Error::Replication { source, .. } => source.as_ref().into(),
            _ => FchmrfStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (FchmrfStatus, String)>) -> FchmrfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FchmrfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FchmrfStatus::Panic
        }
    }
}

fn lib<T>(r: fchmrf::Result<T>) -> Result<T, (FchmrfStatus, String)> {
    r.map_err(|e| ((&e).into(), e.to_string()))
}

fn null(what: &str) -> (FchmrfStatus, String) {
    (FchmrfStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(
    p: *const T,
    len: usize,
    what: &str,
) -> Result<&'a [T], (FchmrfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(
    p: *mut T,
    len: usize,
    what: &str,
) -> Result<&'a mut [T], (FchmrfStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn fchmrf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fchmrf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque permutohedral lattice.
pub struct FchmrfLattice(PermutohedralLattice);

/// Builds a lattice over `m` points of dimension `d` (row-major,
/// bandwidth units).
///
/// # Safety
/// `positions` must hold `m * d` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_lattice_build(
    positions: *const f64,
    m: usize,
    d: usize,
    out: *mut *mut FchmrfLattice,
) -> FchmrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = input(positions, m * d, "positions")?.to_vec();
        let pos = lib(PositionMatrix::new(d, data))?;
        let lattice = lib(PermutohedralLattice::build(&pos))?;
        *out = Box::into_raw(Box::new(FchmrfLattice(lattice)));
        Ok(())
    })
}

/// Gaussian filter of one value per point, self term included.
///
/// # Safety
/// `values` and `out` must hold `m` entries, `m` being the build size.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_lattice_filter(
    lattice: *const FchmrfLattice,
    values: *const f64,
    out: *mut f64,
    m: usize,
) -> FchmrfStatus {
    guard(|| {
        let lattice = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        if m != lattice.0.len() {
            return Err((
                FchmrfStatus::DimensionMismatch,
                format!("lattice has {} points, got {m}", lattice.0.len()),
            ));
        }
        let v = ValueChannels::single(input(values, m, "values")?.to_vec());
        let f = lib(lattice.0.filter(&v))?;
        output(out, m, "out")?.copy_from_slice(f.as_slice());
        Ok(())
    })
}

/// Releases a lattice; null is ignored.
///
/// # Safety
/// `lattice` must come from [`fchmrf_lattice_build`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_lattice_free(lattice: *mut FchmrfLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// EM and testing settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FchmrfFitConfig {
    pub alpha: f64,
    pub r: usize,
    pub samples: usize,
    pub max_iterations: usize,
    pub patience: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Nonzero starts the smoothness weight at 5.
    pub weak_signal: u8,
    pub pair_budget: usize,
    pub seed: u64,
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn fchmrf_fit_config_default() -> FchmrfFitConfig {
    let em = EmConfig::default();
    FchmrfFitConfig {
        alpha: 0.1,
        r: em.r,
        samples: em.samples,
        max_iterations: em.max_iterations,
        patience: em.patience,
        epochs: em.epochs,
        learning_rate: em.optimizer.lr,
        weight_decay: em.optimizer.weight_decay,
        weak_signal: u8::from(em.weak_signal),
        pair_budget: DEFAULT_PAIR_BUDGET,
        seed: em.seed,
    }
}

impl FchmrfFitConfig {
    fn em(&self) -> EmConfig {
        EmConfig {
            r: self.r,
            samples: self.samples,
            max_iterations: self.max_iterations,
            patience: self.patience,
            epochs: self.epochs,
            optimizer: AdamW {
                lr: self.learning_rate,
                weight_decay: self.weight_decay,
                ..AdamW::default()
            },
            weak_signal: self.weak_signal != 0,
            pair_budget: self.pair_budget,
            seed: self.seed,
        }
    }
}

/// Opaque fitted model with its LIS values and rejections.
pub struct FchmrfFit(PipelineResult);

/// Fits the field and runs the LIS procedure on `m` voxels.
///
/// `coords` holds `3 m` integer grid coordinates `(x, y, z)` per voxel;
/// `delta_mu` may be null.
///
/// # Safety
/// Arrays must hold the stated number of entries; `config` and `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit(
    x: *const f64,
    coords: *const u32,
    delta_mu: *const f64,
    m: usize,
    config: *const FchmrfFitConfig,
    out: *mut *mut FchmrfFit,
) -> FchmrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let x = input(x, m, "x")?;
        let flat = input(coords, 3 * m, "coords")?;
        let coords: Vec<[usize; 3]> = flat
            .chunks_exact(3)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
            .collect();
        let dm = if delta_mu.is_null() {
            None
        } else {
            Some(input(delta_mu, m, "delta_mu")?)
        };
        let result = lib(run_pipeline(x, &coords, dm, &config.em(), config.alpha))?;
        *out = Box::into_raw(Box::new(FchmrfFit(result)));
        Ok(())
    })
}

/// Number of voxels in a fit.
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit_len(fit: *const FchmrfFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.lis.len())
}

/// Fitted `(w0, w1, w2)`.
///
/// # Safety
/// `out` must hold three values.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit_weights(fit: *const FchmrfFit, out: *mut f64) -> FchmrfStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        output(out, 3, "out")?.copy_from_slice(&fit.0.weights.to_array());
        Ok(())
    })
}

/// LIS values and rejection flags (1 = rejected); `rejected` may be null.
///
/// # Safety
/// `lis` and non-null `rejected` must hold `m` entries.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit_results(
    fit: *const FchmrfFit,
    lis: *mut f64,
    rejected: *mut u8,
    m: usize,
) -> FchmrfStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if m != fit.0.lis.len() {
            return Err((
                FchmrfStatus::DimensionMismatch,
                format!("fit has {} voxels, got {m}", fit.0.lis.len()),
            ));
        }
        output(lis, m, "lis")?.copy_from_slice(fit.0.lis.values());
        if !rejected.is_null() {
            for (o, &r) in output(rejected, m, "rejected")?
                .iter_mut()
                .zip(&fit.0.outcome.rejected)
            {
                *o = u8::from(r);
            }
        }
        Ok(())
    })
}

/// EM iterations run and the best loss reached.
///
/// # Safety
/// Output pointers may be null; non-null ones must be writable.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit_em_summary(
    fit: *const FchmrfFit,
    iterations: *mut usize,
    best_loss: *mut f64,
) -> FchmrfStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if let Some(i) = iterations.as_mut() {
            *i = fit.0.state.iteration;
        }
        if let Some(l) = best_loss.as_mut() {
            *l = fit.0.state.best_loss;
        }
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`fchmrf_fit`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_fit_free(fit: *mut FchmrfFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Step-up procedure on `m` LIS values; writes flags and the count.
///
/// # Safety
/// `lis` and `rejected` must hold `m` entries; `k` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn fchmrf_lis_test(
    lis: *const f64,
    m: usize,
    alpha: f64,
    rejected: *mut u8,
    k: *mut usize,
) -> FchmrfStatus {
    guard(|| {
        let vol = lib(LisVolume::new(input(lis, m, "lis")?.to_vec()))?;
        let outcome = lib(lis_test(&vol, alpha))?;
        for (o, &r) in output(rejected, m, "rejected")?
            .iter_mut()
            .zip(&outcome.rejected)
        {
            *o = u8::from(r);
        }
        if let Some(k) = k.as_mut() {
            *k = outcome.k;
        }
        Ok(())
    })
}

/// Benjamini-Hochberg on `m` p-values.
///
/// # Safety
/// As [`fchmrf_lis_test`].
#[no_mangle]
pub unsafe extern "C" fn fchmrf_bh_test(
    pvalues: *const f64,
    m: usize,
    alpha: f64,
    rejected: *mut u8,
    k: *mut usize,
) -> FchmrfStatus {
    guard(|| {
        let outcome = lib(bh_test(input(pvalues, m, "pvalues")?, alpha))?;
        for (o, &r) in output(rejected, m, "rejected")?
            .iter_mut()
            .zip(&outcome.rejected)
        {
            *o = u8::from(r);
        }
        if let Some(k) = k.as_mut() {
            *k = outcome.k;
        }
        Ok(())
    })
}
