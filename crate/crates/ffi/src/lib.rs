//! C interface to `diet-attn`.
//!
//! Models are opaque handles created by `diet_model_new` or `diet_model_load`
//! and released with `diet_model_free`. Every fallible call returns a
//! `DietStatus`; the message for the most recent failure on the calling thread
//! is available from `diet_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use diet_attn::archive::TensorArchive;
use diet_attn::model::{Model, ModelConfig};
use diet_attn::tensor::numerical_rank;
use diet_attn::{AttentionConfig, Error, Matrix, PositionScheme, SchemeName};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DietStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque model handle.
pub struct DietModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> DietStatus {
    match err {
        Error::Dimension { .. } | Error::Shape(_) => DietStatus::Shape,
        Error::Numeric(_)
        | Error::SvdNonConvergence { .. }
        | Error::Divergence { .. }
        | Error::NonFiniteLoss { .. } => DietStatus::Numeric,
        Error::Io(_) | Error::Archive(_) | Error::Json(_) => DietStatus::Io,
        _ => DietStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (DietStatus, String)>) -> DietStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DietStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DietStatus::Panic
        }
    }
}

fn lib<T>(r: diet_attn::Result<T>) -> Result<T, (DietStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DietStatus, String) {
    (DietStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DietStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DietStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn diet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn diet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model. `scheme` is one of `none`, `input-add`, `sinusoidal`,
/// `diet-abs`, `diet-rel`, `shaw`, `t5`, `linformer-diet-abs`.
///
/// # Safety
/// `scheme` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diet_model_new(
    scheme: *const c_char,
    n: usize,
    d: usize,
    heads: usize,
    layers: usize,
    d_p: usize,
    vocab: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut DietModel,
) -> DietStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name: SchemeName = str_arg(scheme, "scheme")?
            .parse()
            .map_err(|e: Error| (DietStatus::InvalidArgument, e.to_string()))?;
        let base = AttentionConfig::new(n, d, heads, layers, PositionScheme::None);
        let config = ModelConfig::new(name.configure(&base, d_p), vocab, num_classes);
        let model = lib(Model::new(config, seed))?;
        *out = Box::into_raw(Box::new(DietModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn diet_model_free(model: *mut DietModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of logits per position.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn diet_model_num_classes(model: *const DietModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().num_classes)
}

/// Sequence length the model was built for.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn diet_model_seq_len(model: *const DietModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.attention_config().n)
}

/// Writes `len × num_classes` row-major logits into `logits`, which holds `capacity` doubles.
///
/// # Safety
/// `tokens` must point to `len` values and `logits` to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn diet_model_forward(
    model: *const DietModel,
    tokens: *const u32,
    len: usize,
    logits: *mut f64,
    capacity: usize,
) -> DietStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if tokens.is_null() {
            return Err(null("tokens"));
        }
        if logits.is_null() {
            return Err(null("logits"));
        }
        let toks: Vec<usize> = std::slice::from_raw_parts(tokens, len)
            .iter()
            .map(|&t| t as usize)
            .collect();
        let need = len * model.inner.config().num_classes;
        if capacity < need {
            return Err((
                DietStatus::BufferTooSmall,
                format!("logits buffer holds {capacity} values, {need} needed"),
            ));
        }
        let out = lib(model.inner.forward(&toks, None))?;
        std::slice::from_raw_parts_mut(logits, need).copy_from_slice(out.data());
        Ok(())
    })
}

/// Writes the model to `path`.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn diet_model_save(
    model: *const DietModel,
    path: *const c_char,
) -> DietStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let path = str_arg(path, "path")?;
        lib(model
            .inner
            .to_archive()
            .and_then(|a| a.save(Path::new(path))))
    })
}

/// Loads a model written by `diet_model_save` or the `diet train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diet_model_load(
    path: *const c_char,
    out: *mut *mut DietModel,
) -> DietStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model =
            lib(TensorArchive::load(Path::new(path)).and_then(|a| Model::from_archive(&a)))?;
        *out = Box::into_raw(Box::new(DietModel { inner: model }));
        Ok(())
    })
}

/// Numerical rank of a row-major `rows × cols` matrix: singular values above
/// `rel_tol` times the largest.
///
/// # Safety
/// `data` must point to `rows * cols` doubles and `rank` to a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn diet_numerical_rank(
    data: *const f64,
    rows: usize,
    cols: usize,
    rel_tol: f64,
    rank: *mut usize,
) -> DietStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if rank.is_null() {
            return Err(null("rank"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| {
            (
                DietStatus::InvalidArgument,
                "rows * cols overflows".to_string(),
            )
        })?;
        let m = lib(Matrix::from_vec(
            rows,
            cols,
            std::slice::from_raw_parts(data, len).to_vec(),
        ))?;
        *rank = lib(numerical_rank(&m, rel_tol))?;
        Ok(())
    })
}
