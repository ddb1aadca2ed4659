//! C ABI over `svmllab`: opaque dataset and model handles, integer status
//! codes and a thread-local last-error message.
//!
//! Every function returns a status code and writes results through out
//! pointers. Handles are owned by the caller and released with the matching
//! `_free` function. Panics are caught at the boundary and reported as
//! `SVMLLAB_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use svmllab::dataset::fetch::load_bundled;
use svmllab::dataset::{load_csv, LabelColumn};
use svmllab::metric::{InitScale, LinearMetric, MetricShape};
use svmllab::svml::{fit_svml, stable_check, SvmlConfig};
use svmllab::{Dataset, Error, Mat, SolverOptions, SvmModel};

pub const SVMLLAB_OK: c_int = 0;
/// A required pointer argument was null.
pub const SVMLLAB_ERR_NULL: c_int = 1;
/// An argument was out of range or malformed.
pub const SVMLLAB_ERR_INVALID: c_int = 2;
/// Input data was rejected (shape, labels, parse failure).
pub const SVMLLAB_ERR_DATA: c_int = 3;
/// A solver or optimizer failed.
pub const SVMLLAB_ERR_FIT: c_int = 4;
/// File or network access failed.
pub const SVMLLAB_ERR_IO: c_int = 5;
/// A Rust panic was caught.
pub const SVMLLAB_ERR_PANIC: c_int = 6;

pub const SVMLLAB_SHAPE_FULL: c_int = 0;
pub const SVMLLAB_SHAPE_DIAGONAL: c_int = 1;
pub const SVMLLAB_SHAPE_SPHERICAL: c_int = 2;
/// Rectangular `r×d`; `r` is passed separately.
pub const SVMLLAB_SHAPE_RECTANGULAR: c_int = 3;

/// Labelled examples with ±1 labels.
pub struct SvmlDataset {
    inner: Arc<Dataset>,
}

/// A fitted RBF-kernel SVM together with its metric.
pub struct SvmlModel {
    inner: SvmModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(c_int, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Json(_) => SVMLLAB_ERR_INVALID,
            Error::Io { .. } | Error::Fetch { .. } | Error::DigestMismatch { .. } => SVMLLAB_ERR_IO,
            Error::DimensionMismatch { .. }
            | Error::Csv(_)
            | Error::Data(_)
            | Error::SplitRetries { .. } => SVMLLAB_ERR_DATA,
            Error::NotPositiveDefinite { .. }
            | Error::SolverNotConverged { .. }
            | Error::SingularSystem
            | Error::Optimization(_) => SVMLLAB_ERR_FIT,
        };
        Failure(code, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(SVMLLAB_ERR_NULL, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SVMLLAB_ERR_INVALID, msg.into())
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SVMLLAB_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SVMLLAB_ERR_PANIC
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn shape_from(code: c_int, rank: usize) -> Result<MetricShape, Failure> {
    match code {
        SVMLLAB_SHAPE_FULL => Ok(MetricShape::Full),
        SVMLLAB_SHAPE_DIAGONAL => Ok(MetricShape::Diagonal),
        SVMLLAB_SHAPE_SPHERICAL => Ok(MetricShape::Spherical),
        SVMLLAB_SHAPE_RECTANGULAR => Ok(MetricShape::Rectangular(rank)),
        _ => Err(invalid(format!("unknown shape code {code}"))),
    }
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn svmllab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn svmllab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy `n` row-major rows of `d` features and their ±1 labels into a new
/// dataset.
///
/// # Safety
/// `x` must point to `n*d` doubles and `y` to `n` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_dataset_new(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    out: *mut *mut SvmlDataset,
) -> c_int {
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| invalid("n*d overflows"))?;
        let x = slice(x, len, "x")?;
        let y = slice(y, n, "y")?;
        let features = Mat::from_vec(n, d, x.to_vec())?;
        let names = (0..d).map(|j| format!("x{j}")).collect();
        let ds = Dataset::new(features, y.to_vec(), names, "ffi")?;
        let handle = Box::into_raw(Box::new(SvmlDataset {
            inner: Arc::new(ds),
        }));
        write_out(out, handle, "out")
    })
}

/// Load a bundled dataset id (`haber`, `credit`, ...) or a CSV file whose
/// last column is the label with positive class `positive_label`.
///
/// # Safety
/// `source` and `positive_label` must be NUL-terminated strings; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_dataset_load(
    source: *const c_char,
    positive_label: *const c_char,
    out: *mut *mut SvmlDataset,
) -> c_int {
    guard(|| {
        let source = c_str(source, "source")?;
        let positive = c_str(positive_label, "positive_label")?;
        let loaded = if Path::new(source).is_file() {
            load_csv(Path::new(source), &LabelColumn::Last, positive)?
        } else {
            load_bundled(source)?
        };
        let handle = Box::into_raw(Box::new(SvmlDataset {
            inner: Arc::new(loaded.dataset),
        }));
        write_out(out, handle, "out")
    })
}

/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_dataset_shape(
    ds: *const SvmlDataset,
    n: *mut usize,
    d: *mut usize,
) -> c_int {
    guard(|| {
        let ds = as_ref(ds, "ds")?;
        write_out(n, ds.inner.len(), "n")?;
        write_out(d, ds.inner.dim(), "d")
    })
}

/// Release a dataset. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svmllab_dataset_free(ds: *mut SvmlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fit an SVM with kernel `exp(−‖x − x'‖²/σ²)` and penalty `c`.
///
/// # Safety
/// `train` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_svm_fit(
    train: *const SvmlDataset,
    sigma_sq: f64,
    c: f64,
    out: *mut *mut SvmlModel,
) -> c_int {
    guard(|| {
        let train = as_ref(train, "train")?;
        if !(sigma_sq > 0.0) || !(c > 0.0) {
            return Err(invalid("sigma_sq and c must be positive"));
        }
        let metric = LinearMetric::spherical(train.inner.dim(), 1.0 / sigma_sq.sqrt())?;
        let model = SvmModel::fit(train.inner.clone(), &metric, c, &SolverOptions::default())?;
        write_out(
            out,
            Box::into_raw(Box::new(SvmlModel { inner: model })),
            "out",
        )
    })
}

/// Learn a metric of the given shape (and C) on `train` against `val`,
/// early-stopping on `holdout`. `config_json` may be null or a JSON object
/// with SVML configuration keys; the shape argument overrides its `shape`.
///
/// # Safety
/// Dataset arguments must be live handles, `config_json` null or a
/// NUL-terminated string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_svml_fit(
    train: *const SvmlDataset,
    val: *const SvmlDataset,
    holdout: *const SvmlDataset,
    shape: c_int,
    rank: usize,
    config_json: *const c_char,
    out: *mut *mut SvmlModel,
) -> c_int {
    guard(|| {
        let train = as_ref(train, "train")?;
        let val = as_ref(val, "val")?;
        let holdout = as_ref(holdout, "holdout")?;
        let mut cfg: SvmlConfig = if config_json.is_null() {
            SvmlConfig::default()
        } else {
            serde_json::from_str(c_str(config_json, "config_json")?)
                .map_err(|e| invalid(e.to_string()))?
        };
        cfg.shape = shape_from(shape, rank)?;
        cfg.shape.validate(train.inner.dim())?;
        let fit = fit_svml(train.inner.clone(), &val.inner, &holdout.inner, &cfg)?;
        write_out(
            out,
            Box::into_raw(Box::new(SvmlModel { inner: fit.model })),
            "out",
        )
    })
}

/// Decision values `h(x)` for `n` row-major rows of the model's dimension.
///
/// # Safety
/// `model` must be live, `x` must hold `n*d` doubles and `h` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_decision(
    model: *const SvmlModel,
    x: *const f64,
    n: usize,
    h: *mut f64,
) -> c_int {
    guard(|| {
        let model = as_ref(model, "model")?;
        let d = model.inner.metric().dim();
        let len = n.checked_mul(d).ok_or_else(|| invalid("n*d overflows"))?;
        let rows = Mat::from_vec(n, d, slice(x, len, "x")?.to_vec())?;
        let values = model.inner.decision_batch(&rows)?;
        if n > 0 {
            if h.is_null() {
                return Err(null("h"));
            }
            std::slice::from_raw_parts_mut(h, n).copy_from_slice(&values);
        }
        Ok(())
    })
}

/// Fraction of `eval` misclassified.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_error_rate(
    model: *const SvmlModel,
    eval: *const SvmlDataset,
    out: *mut f64,
) -> c_int {
    guard(|| {
        let model = as_ref(model, "model")?;
        let eval = as_ref(eval, "eval")?;
        write_out(out, model.inner.error_rate(&eval.inner)?, "out")
    })
}

/// Number of support vectors, `C`, and the metric shape code.
///
/// # Safety
/// `model` must be live; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_info(
    model: *const SvmlModel,
    num_support: *mut usize,
    c: *mut f64,
    shape: *mut c_int,
) -> c_int {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        write_out(num_support, m.support_idx().len(), "num_support")?;
        write_out(c, m.c_value(), "c")?;
        let code = match m.metric().shape() {
            MetricShape::Full => SVMLLAB_SHAPE_FULL,
            MetricShape::Diagonal => SVMLLAB_SHAPE_DIAGONAL,
            MetricShape::Spherical => SVMLLAB_SHAPE_SPHERICAL,
            MetricShape::Rectangular(_) => SVMLLAB_SHAPE_RECTANGULAR,
        };
        write_out(shape, code, "shape")
    })
}

/// The explicit `r×d` matrix `L`, row-major. `len` receives `r*d`; when
/// `cap` is smaller nothing is copied and `SVMLLAB_ERR_INVALID` is returned.
///
/// # Safety
/// `model` must be live, `buf` must hold `cap` doubles, `len` writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_metric(
    model: *const SvmlModel,
    buf: *mut f64,
    cap: usize,
    rows: *mut usize,
    len: *mut usize,
) -> c_int {
    guard(|| {
        let l = as_ref(model, "model")?.inner.metric().to_matrix();
        let values = l.as_slice();
        write_out(len, values.len(), "len")?;
        write_out(rows, l.rows(), "rows")?;
        if cap < values.len() {
            return Err(invalid(format!(
                "buffer holds {cap} values, need {}",
                values.len()
            )));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// The model as JSON (`alpha`, `b`, `support_idx`, `C`, `metric`). Release
/// the string with [`svmllab_string_free`].
///
/// # Safety
/// `model` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_to_json(
    model: *const SvmlModel,
    out: *mut *mut c_char,
) -> c_int {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let text = serde_json::to_string(&m.to_json("")).map_err(Error::from)?;
        let c = CString::new(text).map_err(|e| invalid(e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svmllab_model_free(model: *mut SvmlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svmllab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Finite-difference check of the SVML gradient on a random support-stable
/// problem. `max_rel_error` receives the largest relative disagreement.
///
/// # Safety
/// `max_rel_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_gradcheck(
    seed: u64,
    shape: c_int,
    rank: usize,
    a: f64,
    learn_c: bool,
    max_rel_error: *mut f64,
) -> c_int {
    guard(|| {
        let shape = shape_from(shape, rank)?;
        if !(a > 0.0) {
            return Err(invalid("a must be positive"));
        }
        let (_, report) = stable_check(seed, shape, a, learn_c, false)?;
        write_out(max_rel_error, report.max_rel_error, "max_rel_error")
    })
}

/// Default starting metric `I/√d` of the given shape, as an `r×d` row-major
/// matrix written to `buf` (room for `d*d` values suffices).
///
/// # Safety
/// `buf` must hold `cap` doubles and `rows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svmllab_default_metric(
    shape: c_int,
    rank: usize,
    d: usize,
    buf: *mut f64,
    cap: usize,
    rows: *mut usize,
) -> c_int {
    guard(|| {
        let shape = shape_from(shape, rank)?;
        if matches!(shape, MetricShape::Rectangular(_)) {
            return Err(invalid("rectangular defaults need training data"));
        }
        let l = LinearMetric::init_default(shape, d, None, InitScale::InvSqrtD)?.to_matrix();
        if cap < l.as_slice().len() {
            return Err(invalid(format!(
                "buffer holds {cap} values, need {}",
                l.as_slice().len()
            )));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, l.as_slice().len()).copy_from_slice(l.as_slice());
        write_out(rows, l.rows(), "rows")
    })
}
