//! C ABI over the quantification engines and the reproducibility statistics.
//!
//! Conventions:
//! - every fallible call returns an [`MrsStatus`]; on failure a message is
//!   available from [`mrs_last_error_message`] on the same thread;
//! - objects are opaque handles created by `*_new`/`*_read`/`mrs_fit` and
//!   released with the matching `*_free` (null is accepted);
//! - metabolites are addressed by their index in the canonical order, see
//!   [`mrs_metabolite_count`] and [`mrs_metabolite_name`].
//!
//! # Safety
//!
//! Every pointer argument must be null or valid for the access the function
//! documents: handles must come from this library and not be freed yet,
//! array arguments must hold at least `n` elements, and strings must be
//! NUL-terminated. Handles may be shared across threads for reading but
//! must not be freed while in use.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mrs_repro::fidio::{read_fid, write_fid};
use mrs_repro::harness::Acquisition;
use mrs_repro::metrics::{bland_altman, execution_residuals, rmse, wilcoxon_signed_rank, QuantRecord};
use mrs_repro::quant::{fit_freq_domain, fit_time_domain, FitResult, MethodConfig, MethodId};
use mrs_repro::signal::{FidSignal, Metabolite, Voxel};
use num_complex::Complex64;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    FitFailed = 4,
    StatsFailed = 5,
    /// A Rust panic was caught at the boundary; the handle arguments should
    /// be considered unusable.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsMethod {
    TdfitA = 0,
    TdfitB = 1,
    FreqfitA = 2,
    FreqfitB = 3,
}

impl From<MrsMethod> for MethodId {
    fn from(m: MrsMethod) -> Self {
        match m {
            MrsMethod::TdfitA => MethodId::TdfitA,
            MrsMethod::TdfitB => MethodId::TdfitB,
            MrsMethod::FreqfitA => MethodId::FreqfitA,
            MrsMethod::FreqfitB => MethodId::FreqfitB,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MrsBlandAltman {
    pub bias: f64,
    pub sd_diff: f64,
    pub ci95: f64,
    pub z95: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MrsWilcoxon {
    pub n: usize,
    pub w_plus: f64,
    pub z: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Standard acquisition: spectrometer context, metabolite basis and
/// macromolecule model.
pub struct MrsAcquisition(Acquisition);

pub struct MrsFid(FidSignal);

pub struct MrsFitResult(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(MrsStatus, String);

fn fail<T>(status: MrsStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MrsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            MrsStatus::Internal
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(MrsStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(MrsStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(MrsStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(MrsStatus::InvalidArgument, "path is not UTF-8"),
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(MrsStatus::NullPointer, "output pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn metabolite(index: usize) -> Result<Metabolite, Failure> {
    Metabolite::ALL.get(index).copied().map_or_else(
        || fail(MrsStatus::InvalidArgument, format!("metabolite index {index} out of range")),
        Ok,
    )
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn mrs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn mrs_metabolite_count() -> usize {
    Metabolite::ALL.len()
}

/// Static, NUL-terminated name, or null for an out-of-range index.
#[no_mangle]
pub extern "C" fn mrs_metabolite_name(index: usize) -> *const c_char {
    const NAMES: [&CStr; 7] = [c"NAA", c"Cr+PCr", c"PCho+GPC", c"Glu", c"Gln", c"GABA", c"Tau"];
    match Metabolite::ALL.get(index) {
        Some(m) => {
            debug_assert_eq!(NAMES[index].to_str().ok(), Some(m.name()));
            NAMES[index].as_ptr()
        }
        None => ptr::null(),
    }
}

// ------------------------------------------------------------ acquisition

#[no_mangle]
pub unsafe extern "C" fn mrs_acquisition_standard(out: *mut *mut MrsAcquisition) -> MrsStatus {
    guard(|| put(out, MrsAcquisition(Acquisition::standard())))
}

/// Number of time-domain points a FID must have to be fitted.
#[no_mangle]
pub unsafe extern "C" fn mrs_acquisition_n_points(acq: *const MrsAcquisition) -> usize {
    acq.as_ref().map_or(0, |a| a.0.basis.n_points())
}

#[no_mangle]
pub unsafe extern "C" fn mrs_acquisition_dwell_time(acq: *const MrsAcquisition) -> f64 {
    acq.as_ref().map_or(f64::NAN, |a| a.0.basis.dwell_time())
}

#[no_mangle]
pub unsafe extern "C" fn mrs_acquisition_free(acq: *mut MrsAcquisition) {
    if !acq.is_null() {
        drop(Box::from_raw(acq));
    }
}

// ------------------------------------------------------------ FIDs

/// Copy `n` complex samples given as separate real and imaginary arrays.
#[no_mangle]
pub unsafe extern "C" fn mrs_fid_new(
    re: *const f64,
    im: *const f64,
    n: usize,
    dwell_time: f64,
    out: *mut *mut MrsFid,
) -> MrsStatus {
    guard(|| {
        let (re, im) = (slice(re, n, "re")?, slice(im, n, "im")?);
        let samples = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let fid = FidSignal::new(samples, dwell_time).or_else(|e| fail(MrsStatus::InvalidArgument, e.to_string()))?;
        put(out, MrsFid(fid.with_labels("ffi", Voxel::None, "")))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fid_read(path: *const c_char, out: *mut *mut MrsFid) -> MrsStatus {
    guard(|| {
        let fid = read_fid(&path_arg(path)?).or_else(|e| fail(MrsStatus::Io, e.to_string()))?;
        put(out, MrsFid(fid))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fid_write(fid: *const MrsFid, path: *const c_char) -> MrsStatus {
    guard(|| {
        let fid = as_ref(fid, "fid")?;
        write_fid(&fid.0, &path_arg(path)?).or_else(|e| fail(MrsStatus::Io, e.to_string()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fid_len(fid: *const MrsFid) -> usize {
    fid.as_ref().map_or(0, |f| f.0.len())
}

/// Copy the samples into caller buffers of capacity `n`, which must be at
/// least [`mrs_fid_len`].
#[no_mangle]
pub unsafe extern "C" fn mrs_fid_samples(fid: *const MrsFid, re: *mut f64, im: *mut f64, n: usize) -> MrsStatus {
    guard(|| {
        let fid = as_ref(fid, "fid")?;
        let s = fid.0.samples();
        if n < s.len() {
            return fail(MrsStatus::InvalidArgument, format!("buffer holds {n} samples, need {}", s.len()));
        }
        if re.is_null() || im.is_null() {
            return fail(MrsStatus::NullPointer, "sample buffer is null");
        }
        for (i, z) in s.iter().enumerate() {
            *re.add(i) = z.re;
            *im.add(i) = z.im;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fid_free(fid: *mut MrsFid) {
    if !fid.is_null() {
        drop(Box::from_raw(fid));
    }
}

// ------------------------------------------------------------ fitting

/// Fit `fid` with a preset method. `seed` drives the multi-start draws of
/// the time-domain engine and is ignored by the frequency-domain one.
#[no_mangle]
pub unsafe extern "C" fn mrs_fit(
    acq: *const MrsAcquisition,
    fid: *const MrsFid,
    method: MrsMethod,
    seed: u64,
    out: *mut *mut MrsFitResult,
) -> MrsStatus {
    guard(|| {
        let acq = &as_ref(acq, "acquisition")?.0;
        let fid = &as_ref(fid, "fid")?.0;
        let id = MethodId::from(method);
        let cfg = MethodConfig::preset(id);
        let fit = if id.is_stochastic() {
            fit_time_domain(fid, &acq.basis, &acq.mm, &cfg, seed)
        } else {
            fit_freq_domain(fid, &acq.basis, &acq.mm, &cfg, &acq.ctx)
        }
        .or_else(|e| fail(MrsStatus::FitFailed, e.to_string()))?;
        put(out, MrsFitResult(fit))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fit_concentration(res: *const MrsFitResult, metabolite_index: usize, out: *mut f64) -> MrsStatus {
    guard(|| {
        let res = as_ref(res, "result")?;
        let m = metabolite(metabolite_index)?;
        let c = res.0.concentrations.get(&m).copied().unwrap_or(f64::NAN);
        out.as_mut().map_or_else(|| fail(MrsStatus::NullPointer, "out is null"), |o| {
            *o = c;
            Ok(())
        })
    })
}

/// Cramér-Rao standard deviation; NaN when the bound is unavailable.
#[no_mangle]
pub unsafe extern "C" fn mrs_fit_crb_sd(res: *const MrsFitResult, metabolite_index: usize, out: *mut f64) -> MrsStatus {
    guard(|| {
        let res = as_ref(res, "result")?;
        let m = metabolite(metabolite_index)?;
        let c = res.0.crb_sd.get(&m).copied().flatten().unwrap_or(f64::NAN);
        out.as_mut().map_or_else(|| fail(MrsStatus::NullPointer, "out is null"), |o| {
            *o = c;
            Ok(())
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fit_converged(res: *const MrsFitResult) -> bool {
    res.as_ref().is_some_and(|r| r.0.converged)
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fit_final_cost(res: *const MrsFitResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.0.final_cost)
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fit_iterations(res: *const MrsFitResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.n_iterations)
}

#[no_mangle]
pub unsafe extern "C" fn mrs_fit_result_free(res: *mut MrsFitResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

// ------------------------------------------------------------ statistics

/// Bland-Altman agreement of two paired arrays of per-signal means.
#[no_mangle]
pub unsafe extern "C" fn mrs_bland_altman(a: *const f64, b: *const f64, n: usize, out: *mut MrsBlandAltman) -> MrsStatus {
    guard(|| {
        let (a, b) = (slice(a, n, "a")?, slice(b, n, "b")?);
        let keyed = |v: &[f64]| -> BTreeMap<String, f64> {
            v.iter().enumerate().map(|(i, x)| (format!("{i:020}"), *x)).collect()
        };
        let ba = bland_altman(&keyed(a), &keyed(b)).or_else(|e| fail(MrsStatus::StatsFailed, e.to_string()))?;
        let o = out.as_mut().map_or_else(|| fail(MrsStatus::NullPointer, "out is null"), Ok)?;
        *o = MrsBlandAltman { bias: ba.bias, sd_diff: ba.sd_diff, ci95: ba.ci95, z95: ba.z95 };
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test of paired samples.
#[no_mangle]
pub unsafe extern "C" fn mrs_wilcoxon(x: *const f64, y: *const f64, n: usize, out: *mut MrsWilcoxon) -> MrsStatus {
    guard(|| {
        let (x, y) = (slice(x, n, "x")?, slice(y, n, "y")?);
        let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let w = wilcoxon_signed_rank(&pairs).or_else(|e| fail(MrsStatus::StatsFailed, e.to_string()))?;
        let o = out.as_mut().map_or_else(|| fail(MrsStatus::NullPointer, "out is null"), Ok)?;
        *o = MrsWilcoxon { n: w.n, w_plus: w.w_plus, z: w.z, p_value: w.p_value, exact: w.exact };
        Ok(())
    })
}

/// Inter-execution RMSE of a row-major `n_signals` x `n_executions` table of
/// concentrations: residuals from each signal's own mean, pooled.
#[no_mangle]
pub unsafe extern "C" fn mrs_inter_execution_rmse(
    values: *const f64,
    n_signals: usize,
    n_executions: usize,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let Some(len) = n_signals.checked_mul(n_executions).filter(|&l| l > 0) else {
            return fail(MrsStatus::InvalidArgument, "empty table");
        };
        let v = slice(values, len, "values")?;
        let records: Vec<QuantRecord> = v
            .iter()
            .enumerate()
            .map(|(i, c)| QuantRecord {
                metabolite: Metabolite::Naa,
                signal_id: format!("{:020}", i / n_executions),
                voxel: Voxel::None,
                animal_id: String::new(),
                method: MethodId::TdfitA,
                execution: (i % n_executions) as u32,
                concentration: *c,
                crb_sd: None,
                converged: true,
            })
            .collect();
        let o = out.as_mut().map_or_else(|| fail(MrsStatus::NullPointer, "out is null"), Ok)?;
        *o = rmse(execution_residuals(&records).into_values());
        Ok(())
    })
}
