//! C ABI over the pseudomode library.
//!
//! Every function returns a [`PmStatus`]; on failure the message is available from
//! [`pm_last_error_message`] on the same thread. Matrices cross the boundary as
//! row-major arrays of [`PmComplex`]. Handles are opaque and owned by the caller
//! until passed to the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use num_complex::Complex64 as C64;
use pseudomode::algebra::OperatorMatrix;
use pseudomode::bath::CorrelationSeries;
use pseudomode::config::{from_value, ModelSpec};
use pseudomode::error::Error;
use pseudomode::fitting::{matrix_pencil_fit, ExponentialSum};
use pseudomode::gkls::{free_bath_two_time, GklsModel};
use pseudomode::multitime::{multitime_gkls, two_time_correlator, MultiTimeRequest};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    TruncationBreach = 4,
    Numerical = 5,
    Config = 6,
    Unsupported = 7,
    ResourceCap = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PmComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for PmComplex {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<PmComplex> for C64 {
    fn from(z: PmComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// A GKLS model together with its initial state.
pub struct PmModel {
    inner: GklsModel,
}

/// A fitted sum of complex exponentials.
pub struct PmExpSum {
    inner: ExponentialSum,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PmStatus {
    match e {
        Error::DimensionMismatch(_) | Error::UnknownLabel(_) => PmStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::NonFinite | Error::NonUniformGrid { .. } => PmStatus::InvalidArgument,
        Error::TruncationBreach { .. } => PmStatus::TruncationBreach,
        Error::Quadrature { .. } | Error::RankDeficient { .. } | Error::UnstableExponent { .. } | Error::Numerical(_) => {
            PmStatus::Numerical
        }
        Error::UnsupportedWeight { .. } => PmStatus::Unsupported,
        Error::ResourceCap { .. } | Error::WindowTooNarrow { .. } => PmStatus::ResourceCap,
        Error::Config(_) | Error::Json(_) => PmStatus::Config,
        Error::Io(_) | Error::Csv(_) => PmStatus::Io,
    }
}

struct Fail(PmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PmStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            PmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            PmStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const PmModel) -> Result<&'a GklsModel, Fail> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn operator(ptr: *const PmComplex, dim: usize, what: &str) -> Result<OperatorMatrix, Fail> {
    let s = slice(ptr, dim * dim, what)?;
    Ok(OperatorMatrix::new(dim, s.iter().map(|&z| z.into()).collect())?)
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Builds a model from a JSON object with the same schema as a run config's `model` key.
/// Relative paths inside it resolve against the working directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_model_from_json(json: *const c_char, out: *mut *mut PmModel) -> PmStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(PmStatus::InvalidArgument, format!("json is not UTF-8: {e}")))?;
        let value: serde_json::Value = serde_json::from_str(text).map_err(Error::from)?;
        let spec: ModelSpec = from_value(value)?;
        let inner = spec.resolve(Path::new("."))?;
        write(out, Box::into_raw(Box::new(PmModel { inner })), "out")
    })
}

/// # Safety
/// `model` must come from [`pm_model_from_json`] and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pm_model_free(model: *mut PmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_model_system_dim(model: *const PmModel, out: *mut usize) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out, m.system().dim(), "out")
    })
}

/// Nested multi-time value for `n` insertion times. `left` and `right` hold `n`
/// consecutive d×d matrices; a null `right` means identities.
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pm_multitime(
    model: *const PmModel,
    n: usize,
    times: *const f64,
    left: *const PmComplex,
    right: *const PmComplex,
    out: *mut PmComplex,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = m.system().dim();
        let times = slice(times, n, "times")?.to_vec();
        let mut l = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for k in 0..n {
            l.push(operator(left.wrapping_add(k * d * d), d, "left")?);
            r.push(if right.is_null() {
                OperatorMatrix::identity(d)
            } else {
                operator(right.wrapping_add(k * d * d), d, "right")?
            });
        }
        let req = MultiTimeRequest::new(times, l, r)?;
        write(out, multitime_gkls(m, &req)?.into(), "out")
    })
}

/// `⟨X(t+τ) Y(t)⟩` for d×d operators `x`, `y`.
///
/// # Safety
/// `x` and `y` must hold d² elements.
#[no_mangle]
pub unsafe extern "C" fn pm_two_time_correlator(
    model: *const PmModel,
    x: *const PmComplex,
    y: *const PmComplex,
    t: f64,
    tau: f64,
    out: *mut PmComplex,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = m.system().dim();
        let (x, y) = (operator(x, d, "x")?, operator(y, d, "y")?);
        write(out, two_time_correlator(m, &x, &y, t, tau)?.into(), "out")
    })
}

/// Free pseudomode correlation `C^L_{j j′}(t+s, s)`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_free_bath_two_time(
    model: *const PmModel,
    j: usize,
    jp: usize,
    t: f64,
    s: f64,
    out: *mut PmComplex,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out, free_bath_two_time(m, j, jp, t, s)?.into(), "out")
    })
}

/// Matrix-pencil fit of `order` exponentials to `n` uniformly spaced samples.
/// `max_residual` may be null.
///
/// # Safety
/// `grid` and `values` must hold `n` elements; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_fit_exponentials(
    grid: *const f64,
    values: *const PmComplex,
    n: usize,
    order: usize,
    out: *mut *mut PmExpSum,
    max_residual: *mut f64,
) -> PmStatus {
    guard(|| {
        let grid = slice(grid, n, "grid")?.to_vec();
        let values = slice(values, n, "values")?.iter().map(|&z| z.into()).collect();
        let series = CorrelationSeries::new(grid, values, (0, 0))?;
        let (inner, report) = matrix_pencil_fit(&series, order)?;
        if !max_residual.is_null() {
            max_residual.write(report.max_residual);
        }
        write(out, Box::into_raw(Box::new(PmExpSum { inner })), "out")
    })
}

/// # Safety
/// `es` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_expsum_len(es: *const PmExpSum, out: *mut usize) -> PmStatus {
    guard(|| {
        let es = es.as_ref().ok_or_else(|| null("es"))?;
        write(out, es.inner.len(), "out")
    })
}

/// Term `k` as `amplitude · e^{exponent·t}`.
///
/// # Safety
/// `es` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pm_expsum_term(
    es: *const PmExpSum,
    k: usize,
    amplitude: *mut PmComplex,
    exponent: *mut PmComplex,
) -> PmStatus {
    guard(|| {
        let es = es.as_ref().ok_or_else(|| null("es"))?;
        let term = es.inner.terms.get(k).ok_or_else(|| {
            Fail(PmStatus::InvalidArgument, format!("term {k} out of range for {} terms", es.inner.len()))
        })?;
        write(amplitude, term.amplitude.into(), "amplitude")?;
        write(exponent, term.exponent.into(), "exponent")
    })
}

/// # Safety
/// `es` must come from [`pm_fit_exponentials`] and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pm_expsum_free(es: *mut PmExpSum) {
    if !es.is_null() {
        drop(Box::from_raw(es));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn pm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
