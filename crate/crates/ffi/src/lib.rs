//! C interface to `lpnet`.
//!
//! Every fallible function returns an [`LpnetStatus`]; on failure the message
//! is available from [`lpnet_last_error`] on the same thread. Models are
//! opaque handles created by `lpnet_model_new` / `lpnet_model_load` and
//! released with `lpnet_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use lpnet::model::build_model;
use lpnet::preprocess::{preprocess_sample, RawSample};
use lpnet::training::argmax;
use lpnet::{Error, Model, ModelConfig, PoolExponent};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpnetStatus {
    Ok = 0,
    InvalidArgument = 1,
    InvalidConfiguration = 2,
    InvalidState = 3,
    Format = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Opaque model handle.
pub struct LpnetModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LpnetStatus {
    match e {
        Error::InvalidArgument(_) => LpnetStatus::InvalidArgument,
        Error::InvalidConfiguration { .. } => LpnetStatus::InvalidConfiguration,
        Error::InvalidState(_) => LpnetStatus::InvalidState,
        Error::Format { .. } => LpnetStatus::Format,
        Error::Io { .. } => LpnetStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LpnetStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            LpnetStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic");
            LpnetStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn model_ref<'a>(m: *const LpnetModel) -> Result<&'a Model, Failure> {
    m.as_ref().map(|h| &h.inner).ok_or(Failure::Null("model"))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn exponent(p: f64) -> Result<PoolExponent, Failure> {
    Ok(PoolExponent::Finite(p).validated()?)
}

fn store(out: *mut *mut LpnetModel, model: Model) {
    // SAFETY: callers have checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(LpnetModel { inner: model })) };
}

/// Message for the most recent failure on this thread (empty after success).
/// The pointer stays valid until the next `lpnet_*` call on this thread.
#[no_mangle]
pub extern "C" fn lpnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lpnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a freshly initialized model. `config_json` may be NULL for the
/// default configuration; otherwise its fields override the defaults.
///
/// # Safety
/// `config_json` must be NULL or a valid NUL-terminated string; `out` must
/// be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut LpnetModel,
) -> LpnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let config: ModelConfig = if config_json.is_null() {
            ModelConfig::default()
        } else {
            serde_json::from_str(c_str(config_json, "config_json")?)
                .map_err(|e| Error::InvalidArgument(format!("bad model config: {e}")))?
        };
        store(out, build_model(&config, seed)?);
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_load(path: *const c_char, out: *mut *mut LpnetModel) -> LpnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = c_str(path, "path")?;
        store(out, Model::load_checkpoint(Path::new(path))?);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed; `path` must be a
/// valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_save(model: *const LpnetModel, path: *const c_char) -> LpnetStatus {
    guard(|| {
        let model = model_ref(model)?;
        model.save_checkpoint(Path::new(c_str(path, "path")?))?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_free(model: *mut LpnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input values (`channels × size × size`), or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_input_len(model: *const LpnetModel) -> usize {
    model.as_ref().map_or(0, |m| {
        let c = m.inner.config();
        c.input_channels * c.input_size * c.input_size
    })
}

/// Number of output classes, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_classes(model: *const LpnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().classes)
}

/// Total trainable parameter count, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_parameter_count(model: *const LpnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.parameter_count())
}

/// Writes the logits for one channel-major input into `logits`.
///
/// # Safety
/// `input` must hold `input_len` readable doubles and `logits` `logits_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_forward(
    model: *const LpnetModel,
    input: *const f64,
    input_len: usize,
    logits: *mut f64,
    logits_len: usize,
) -> LpnetStatus {
    guard(|| {
        let model = model_ref(model)?;
        let x = forward_input(model, input, input_len)?;
        let out = model.forward(&x, None)?.logits;
        if logits_len != out.len() {
            return Err(Error::InvalidArgument(format!(
                "logits buffer holds {logits_len}, model emits {}",
                out.len()
            ))
            .into());
        }
        out_slice(logits, logits_len, "logits")?.copy_from_slice(out.data());
        Ok(())
    })
}

/// Writes the predicted class (largest logit, lowest index on ties).
///
/// # Safety
/// As for [`lpnet_model_forward`]; `class_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpnet_model_predict(
    model: *const LpnetModel,
    input: *const f64,
    input_len: usize,
    class_out: *mut u32,
) -> LpnetStatus {
    guard(|| {
        let model = model_ref(model)?;
        if class_out.is_null() {
            return Err(Failure::Null("class_out"));
        }
        let x = forward_input(model, input, input_len)?;
        let out = model.forward(&x, None)?.logits;
        *class_out = argmax(out.data()) as u32;
        Ok(())
    })
}

unsafe fn forward_input(model: &Model, input: *const f64, len: usize) -> Result<lpnet::Tensor, Failure> {
    let c = model.config();
    let shape = vec![c.input_channels, c.input_size, c.input_size];
    let data = in_slice(input, len, "input")?.to_vec();
    Ok(lpnet::Tensor::new(shape, data)?)
}

/// Pools one window: `(Σ G·|I|^p)^(1/p)`, or `max |I|` when `p` is +infinity.
///
/// # Safety
/// `values` and `weights` must each hold `len` readable doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn lpnet_pool_window(
    values: *const f64,
    weights: *const f64,
    len: usize,
    p: f64,
    out: *mut f64,
) -> LpnetStatus {
    guard(|| {
        let p = exponent(p)?;
        let v = in_slice(values, len, "values")?;
        let g = in_slice(weights, len, "weights")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len == 0 {
            return Err(Error::InvalidArgument("empty window".into()).into());
        }
        *out = lpnet::layers::pool_window(v, g, p);
        Ok(())
    })
}

/// Preprocesses one planar 8-bit RGB image (`3 × height × width`, channel
/// major) into normalized Y, U, V planes written to `out` (same layout).
///
/// # Safety
/// `pixels` must hold `3·height·width` readable bytes and `out` as many
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lpnet_preprocess_rgb8(
    pixels: *const u8,
    height: usize,
    width: usize,
    out: *mut f64,
) -> LpnetStatus {
    guard(|| {
        let n = 3usize
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::InvalidArgument("image too large".into()))?;
        let px = in_slice(pixels, n, "pixels")?;
        let raw = RawSample::from_u8(px, height, width, 0)?;
        let done = preprocess_sample(&raw)?;
        out_slice(out, n, "out")?.copy_from_slice(done.channels.data());
        Ok(())
    })
}
