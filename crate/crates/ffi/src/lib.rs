//! C ABI over the optsense library.
//!
//! Models and QFI series live behind opaque handles that the caller frees.
//! Every fallible call returns an [`OptsenseStatus`]; on failure a message
//! is kept per thread and read with [`optsense_last_error`]. Panics are
//! caught at the boundary and reported as [`OptsenseStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use optsense::estimation::{error_propagation, fit_g};
use optsense::lindblad::{analytic_rho, Parameter, ThreeLevelParams, TimeGrid};
use optsense::nonhermitian::{qfi_nprobe, InitialState, NProbeModel};
use optsense::qfi::{qfi_series, ParamDerivativeSpec, QfiSeries};
use optsense::{DensityMatrix, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptsenseStatus {
    Ok = 0,
    NullPointer = 1,
    BufferSize = 2,
    Shape = 3,
    Validation = 4,
    Numerical = 5,
    Unsupported = 6,
    Fit = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

/// Parameter a derivative is taken with respect to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptsenseParameter {
    Coupling = 0,
    Detuning = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptsenseInitialState {
    F1 = 0,
    Chi1 = 1,
    EPlusChi1 = 2,
}

/// Opaque three-level model: coupling, detuning and decay rate in fs⁻¹.
pub struct OptsenseParams(ThreeLevelParams);

/// Opaque QFI time series with its peak and window.
pub struct OptsenseQfiSeries(QfiSeries);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> OptsenseStatus {
    match e {
        Error::Shape(_) => OptsenseStatus::Shape,
        Error::Validation(_) => OptsenseStatus::Validation,
        Error::Numerical(_) => OptsenseStatus::Numerical,
        Error::Unsupported(_) => OptsenseStatus::Unsupported,
        Error::Fit(_) => OptsenseStatus::Fit,
        Error::Config(_) => OptsenseStatus::Config,
        Error::Io(_) => OptsenseStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Outcome) -> OptsenseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OptsenseStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed for {name}"));
            OptsenseStatus::NullPointer
        }
        Ok(Err(Failure::Buffer(msg))) => {
            set_last_error(msg);
            OptsenseStatus::BufferSize
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            OptsenseStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, name: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn parameter(p: OptsenseParameter) -> Parameter {
    match p {
        OptsenseParameter::Coupling => Parameter::G,
        OptsenseParameter::Detuning => Parameter::Delta,
    }
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn optsense_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn optsense_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model from rates in fs⁻¹.
///
/// # Safety
/// `out_params` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn optsense_params_new(
    g: f64,
    delta: f64,
    gamma_e: f64,
    out_params: *mut *mut OptsenseParams,
) -> OptsenseStatus {
    guard(|| {
        let slot = out(out_params, "out_params")?;
        *slot = ptr::null_mut();
        let p = ThreeLevelParams::new(g, delta, gamma_e)?;
        *slot = Box::into_raw(Box::new(OptsenseParams(p)));
        Ok(())
    })
}

/// Creates a model from energies in eV.
///
/// # Safety
/// `out_params` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn optsense_params_from_ev(
    g_ev: f64,
    delta_ev: f64,
    gamma_e_ev: f64,
    out_params: *mut *mut OptsenseParams,
) -> OptsenseStatus {
    guard(|| {
        let slot = out(out_params, "out_params")?;
        *slot = ptr::null_mut();
        let p = ThreeLevelParams::from_ev(g_ev, delta_ev, gamma_e_ev)?;
        *slot = Box::into_raw(Box::new(OptsenseParams(p)));
        Ok(())
    })
}

/// Reads back the rates of a model in fs⁻¹.
///
/// # Safety
/// `params` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_params_get(
    params: *const OptsenseParams,
    g: *mut f64,
    delta: *mut f64,
    gamma_e: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let p = &deref(params, "params")?.0;
        *out(g, "g")? = p.g;
        *out(delta, "delta")? = p.delta;
        *out(gamma_e, "gamma_e")? = p.gamma_e;
        Ok(())
    })
}

/// Frees a model. Null is ignored.
///
/// # Safety
/// `params` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn optsense_params_free(params: *mut OptsenseParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Closed-form ρ(t) for the probe started in |f⟩, row-major over (e, f, s).
/// Fails with `Unsupported` at non-zero detuning.
///
/// # Safety
/// `re` and `im` must each point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn optsense_analytic_rho(
    params: *const OptsenseParams,
    t: f64,
    re: *mut f64,
    im: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let p = &deref(params, "params")?.0;
        let re = slice_out(re, 9, "re")?;
        let im = slice_out(im, 9, "im")?;
        let rho = analytic_rho(p, t)?;
        for i in 0..3 {
            for j in 0..3 {
                let z = rho.element(i, j);
                re[3 * i + j] = z.re;
                im[3 * i + j] = z.im;
            }
        }
        Ok(())
    })
}

/// F(t) on `n_points` evenly spaced times for the probe started in |f⟩.
/// The window is the interval where F exceeds `threshold` times its peak.
///
/// # Safety
/// `params` must come from this library; `out_series` must be valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series(
    params: *const OptsenseParams,
    t_start: f64,
    t_end: f64,
    n_points: usize,
    wrt: OptsenseParameter,
    threshold: f64,
    out_series: *mut *mut OptsenseQfiSeries,
) -> OptsenseStatus {
    guard(|| {
        let slot = out(out_series, "out_series")?;
        *slot = ptr::null_mut();
        let p = &deref(params, "params")?.0;
        let grid = TimeGrid::new(t_start, t_end, n_points)?;
        let wrt = parameter(wrt);
        let s = qfi_series(p, &DensityMatrix::excited_f(), &grid, wrt, ParamDerivativeSpec::default())?;
        let s = QfiSeries::with_threshold(s.times, s.values, wrt, threshold)?;
        *slot = Box::into_raw(Box::new(OptsenseQfiSeries(s)));
        Ok(())
    })
}

/// Number of samples in a series; 0 for null.
///
/// # Safety
/// `series` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series_len(series: *const OptsenseQfiSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Copies times and values into caller buffers of exactly `len` entries.
///
/// # Safety
/// `times` and `values` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series_copy(
    series: *const OptsenseQfiSeries,
    times: *mut f64,
    values: *mut f64,
    len: usize,
) -> OptsenseStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        if len != s.len() {
            return Err(Failure::Buffer(format!("buffers hold {len} samples, series has {}", s.len())));
        }
        slice_out(times, len, "times")?.copy_from_slice(&s.times);
        slice_out(values, len, "values")?.copy_from_slice(&s.values);
        Ok(())
    })
}

/// Refined peak time (fs) and peak value.
///
/// # Safety
/// `series` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series_peak(
    series: *const OptsenseQfiSeries,
    peak_time: *mut f64,
    peak_value: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        *out(peak_time, "peak_time")? = s.peak_time;
        *out(peak_value, "peak_value")? = s.peak_value;
        Ok(())
    })
}

/// Measurement window in fs.
///
/// # Safety
/// `series` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series_window(
    series: *const OptsenseQfiSeries,
    lo: *mut f64,
    hi: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        *out(lo, "lo")? = s.window.0;
        *out(hi, "hi")? = s.window.1;
        Ok(())
    })
}

/// Frees a series. Null is ignored.
///
/// # Safety
/// `series` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn optsense_qfi_series_free(series: *mut OptsenseQfiSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Peak of F(t) for g with `n_probes` probes sharing one lossy level.
///
/// # Safety
/// The out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_nprobe_peak(
    n_probes: usize,
    g: f64,
    gamma_e: f64,
    initial: OptsenseInitialState,
    t_start: f64,
    t_end: f64,
    n_points: usize,
    peak_time: *mut f64,
    peak_value: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let initial = match initial {
            OptsenseInitialState::F1 => InitialState::F1,
            OptsenseInitialState::Chi1 => InitialState::Chi1,
            OptsenseInitialState::EPlusChi1 => InitialState::EPlusChi1,
        };
        let model = NProbeModel::new(n_probes, g, gamma_e, initial)?;
        let s = qfi_nprobe(&model, &TimeGrid::new(t_start, t_end, n_points)?)?;
        *out(peak_time, "peak_time")? = s.peak_time;
        *out(peak_value, "peak_value")? = s.peak_value;
        Ok(())
    })
}

/// Least-squares estimate of g from measured |f⟩ frequencies at `times`.
/// `converged` is 0 when the estimate sits on a bound.
///
/// # Safety
/// `times` and `freqs` must point to `len` doubles; out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn optsense_fit_g(
    times: *const f64,
    freqs: *const f64,
    len: usize,
    gamma_e: f64,
    g_lo: f64,
    g_hi: f64,
    g_hat: *mut f64,
    sse: *mut f64,
    converged: *mut i32,
) -> OptsenseStatus {
    guard(|| {
        let t = slice_in(times, len, "times")?;
        let f = slice_in(freqs, len, "freqs")?;
        let fit = fit_g(t, f, gamma_e, (g_lo, g_hi))?;
        *out(g_hat, "g_hat")? = fit.g_hat;
        *out(sse, "sse")? = fit.sse;
        *out(converged, "converged")? = i32::from(fit.converged);
        Ok(())
    })
}

/// Propagated error of the |f⟩ population readout and 1/√F on
/// `n_points` evenly spaced times. Infinite entries mark times where the
/// readout or the state carries no information.
///
/// # Safety
/// `delta` and `inv_sqrt_f` must each point to `n_points` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn optsense_error_propagation(
    params: *const OptsenseParams,
    t_start: f64,
    t_end: f64,
    n_points: usize,
    wrt: OptsenseParameter,
    delta: *mut f64,
    inv_sqrt_f: *mut f64,
) -> OptsenseStatus {
    guard(|| {
        let p = &deref(params, "params")?.0;
        let d = slice_out(delta, n_points, "delta")?;
        let s = slice_out(inv_sqrt_f, n_points, "inv_sqrt_f")?;
        let ep = error_propagation(p, &TimeGrid::new(t_start, t_end, n_points)?, parameter(wrt))?;
        d.copy_from_slice(&ep.delta_param);
        s.copy_from_slice(&ep.inv_sqrt_f);
        Ok(())
    })
}
