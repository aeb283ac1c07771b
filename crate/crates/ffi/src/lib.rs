//! C ABI over the `ftsreg` estimator.
//!
//! Series and filter banks cross the boundary as opaque handles that the
//! caller frees with the matching `*_free` function. Every fallible call
//! returns an [`FtsregStatus`]; on failure a message is available from
//! [`ftsreg_last_error`] until the next call on the same thread.
//!
//! Matrices are dense, row-major `double` arrays. Series are `T × m` (rows
//! index time). Filter operators are exported as their `m × m` action
//! matrices, i.e. the integral kernel sampled on the grid and divided by `m`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ftsreg::regression::{estimate_filter, schedule, FilterBank};
use ftsreg::simulate::{simulate_pair, ProcessSpec};
use ftsreg::spectral::{FuncSeries, SmoothingKernel};
use ftsreg::{Error, GridContext};
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FtsregStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an argument out of range.
    InvalidArgument = 1,
    /// Mismatched sizes between inputs.
    Dimension = 2,
    /// Invalid process, schedule or kernel configuration.
    Config = 3,
    /// Ridge guard, rank failure or non-finite values.
    Numeric = 4,
    /// Output buffer too small.
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Opaque `T × m` functional time series.
pub struct FtsregSeries(FuncSeries);

/// Opaque estimated or true filter bank.
pub struct FtsregBank(FilterBank);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FtsregStatus {
    match e {
        Error::Dimension(_) | Error::Aliasing { .. } => FtsregStatus::Dimension,
        Error::NonFinite(_) | Error::RidgeNotPositive { .. } | Error::Rank { .. } => FtsregStatus::Numeric,
        Error::Parameter(_) | Error::NotSelfAdjoint(_) | Error::Format(_) | Error::Io(_) => {
            FtsregStatus::InvalidArgument
        }
        Error::Schedule(_) | Error::Config(_) | Error::Json(_) => FtsregStatus::Config,
    }
}

struct Failure(FtsregStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(FtsregStatus::InvalidArgument, msg.to_string())
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FtsregStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FtsregStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FtsregStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| invalid("string is not valid UTF-8"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(&format!("{what} is null")))
}

/// Message describing the last failure on this thread, or null. The string
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ftsreg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ftsreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `t_len * m` row-major values into a new series.
///
/// # Safety
/// `data` must point to `t_len * m` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_series_new(
    data: *const f64,
    t_len: usize,
    m: usize,
    out: *mut *mut FtsregSeries,
) -> FtsregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if data.is_null() {
            return Err(invalid("data is null"));
        }
        let n = t_len.checked_mul(m).ok_or_else(|| invalid("size overflow"))?;
        let values = std::slice::from_raw_parts(data, n);
        let grid = GridContext::new(m)?;
        let series = FuncSeries::new(grid, DMatrix::from_row_slice(t_len, m, values))?;
        *out = Box::into_raw(Box::new(FtsregSeries(series)));
        Ok(())
    })
}

/// # Safety
/// `series` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_series_free(series: *mut FtsregSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Writes `T` and `m` of a series.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_series_shape(
    series: *const FtsregSeries,
    t_len: *mut usize,
    m: *mut usize,
) -> FtsregStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        *out_ptr(t_len, "t_len")? = s.len();
        *out_ptr(m, "m")? = s.grid().m();
        Ok(())
    })
}

/// Copies the row-major values into `buf`, which must hold `T * m` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_series_values(series: *const FtsregSeries, buf: *mut f64, len: usize) -> FtsregStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        let data = s.data();
        if len < data.len() {
            return Err(Failure(
                FtsregStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", data.len()),
            ));
        }
        if buf.is_null() {
            return Err(invalid("buf is null"));
        }
        let out = std::slice::from_raw_parts_mut(buf, data.len());
        let m = s.grid().m();
        for t in 0..s.len() {
            for k in 0..m {
                out[t * m + k] = data[(t, k)];
            }
        }
        Ok(())
    })
}

/// Simulates a coupled pair. `spec_json` may be null for the default
/// process; otherwise it is a process spec in JSON. `truth` may be null.
///
/// # Safety
/// Pointers must be valid; `x` and `y` receive new handles.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_simulate(
    spec_json: *const c_char,
    m: usize,
    t_len: usize,
    seed: u64,
    x: *mut *mut FtsregSeries,
    y: *mut *mut FtsregSeries,
    truth: *mut *mut FtsregBank,
) -> FtsregStatus {
    guard(|| {
        let spec: ProcessSpec = match opt_str(spec_json)? {
            Some(s) => serde_json::from_str(s).map_err(|e| Failure(FtsregStatus::Config, e.to_string()))?,
            None => ProcessSpec::default(),
        };
        let x = out_ptr(x, "x")?;
        let y = out_ptr(y, "y")?;
        let pair = simulate_pair(&spec, GridContext::new(m)?, t_len, seed)?;
        if let Some(t) = truth.as_mut() {
            *t = Box::into_raw(Box::new(FtsregBank(pair.truth.filter())));
        }
        *x = Box::into_raw(Box::new(FtsregSeries(pair.x)));
        *y = Box::into_raw(Box::new(FtsregSeries(pair.y)));
        Ok(())
    })
}

/// Fits the filter with `ζ_T = T^{-α/(α+2β)}`, `B_T = T^{-γ}` and returns
/// lags `-lags..=lags`. `kernel` is `"epanechnikov"`, `"quartic"` or null
/// for the former.
///
/// # Safety
/// Pointers must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_estimate(
    x: *const FtsregSeries,
    y: *const FtsregSeries,
    alpha: f64,
    beta: f64,
    gamma: f64,
    lags: usize,
    kernel: *const c_char,
    out: *mut *mut FtsregBank,
) -> FtsregStatus {
    guard(|| {
        let x = &deref(x, "x")?.0;
        let y = &deref(y, "y")?.0;
        let out = out_ptr(out, "out")?;
        let kernel = SmoothingKernel::by_name(opt_str(kernel)?.unwrap_or("epanechnikov"), None)?;
        let sched = schedule(alpha, beta, gamma, x.len())?;
        let fit = estimate_filter(x, y, &kernel, &sched, lags)?;
        *out = Box::into_raw(Box::new(FtsregBank(fit.bank)));
        Ok(())
    })
}

/// # Safety
/// `bank` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_free(bank: *mut FtsregBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Writes the lag radius `L` and grid size `m`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_shape(bank: *const FtsregBank, radius: *mut usize, m: *mut usize) -> FtsregStatus {
    guard(|| {
        let b = &deref(bank, "bank")?.0;
        *out_ptr(radius, "radius")? = b.radius();
        *out_ptr(m, "m")? = b.grid().m();
        Ok(())
    })
}

/// Relative imaginary mass of the bank.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_imag_mass(bank: *const FtsregBank, out: *mut f64) -> FtsregStatus {
    guard(|| {
        *out_ptr(out, "out")? = deref(bank, "bank")?.0.imag_mass();
        Ok(())
    })
}

/// Squared HS distance `Σ_ℓ ‖A_ℓ − B_ℓ‖₂²` between two banks.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_distance(a: *const FtsregBank, b: *const FtsregBank, out: *mut f64) -> FtsregStatus {
    guard(|| {
        let d = deref(a, "a")?.0.squared_distance(&deref(b, "b")?.0)?;
        *out_ptr(out, "out")? = d;
        Ok(())
    })
}

/// Copies the action matrix at `lag` into `re` and `im` (row-major, `m * m`
/// each). `im` may be null.
///
/// # Safety
/// `re` (and `im` if given) must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_operator(
    bank: *const FtsregBank,
    lag: i64,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FtsregStatus {
    guard(|| {
        let b = &deref(bank, "bank")?.0;
        let op = b
            .get(lag)
            .ok_or_else(|| Failure(FtsregStatus::Dimension, format!("lag {lag} not in bank")))?;
        let m = b.grid().m();
        if len < m * m {
            return Err(Failure(
                FtsregStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", m * m),
            ));
        }
        if re.is_null() {
            return Err(invalid("re is null"));
        }
        let re = std::slice::from_raw_parts_mut(re, m * m);
        let mut im = (!im.is_null()).then(|| std::slice::from_raw_parts_mut(im, m * m));
        for i in 0..m {
            for j in 0..m {
                let z = op.action()[(i, j)];
                re[i * m + j] = z.re;
                if let Some(im) = im.as_deref_mut() {
                    im[i * m + j] = z.im;
                }
            }
        }
        Ok(())
    })
}

/// Serializes the bank as JSON. Free the string with [`ftsreg_string_free`].
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_bank_to_json(bank: *const FtsregBank, out: *mut *mut c_char) -> FtsregStatus {
    guard(|| {
        let b = &deref(bank, "bank")?.0;
        let out = out_ptr(out, "out")?;
        let text = serde_json::to_string(&b.to_json()).map_err(Error::from)?;
        *out = CString::new(text).map_err(|_| invalid("nul in JSON"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ftsreg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
