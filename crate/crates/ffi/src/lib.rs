//! C ABI over the `mtwifi` core: load fingerprint CSVs and trained
//! checkpoints, run predictions, compute EvAAL reports and improvements.
//!
//! Handles are opaque pointers owned by the caller once returned and released
//! with the matching `*_free` function. Every fallible call returns an
//! [`MtwStatus`]; on failure a description is available from
//! [`mtw_last_error`] on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mtwifi::data::{load_csv, Dataset, Role};
use mtwifi::{improvement, Error, TrainedModel};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Shape = 6,
    Domain = 7,
    Checkpoint = 8,
    Config = 9,
    Divergence = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Role of a dataset being loaded.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtwRole {
    Labeled = 0,
    Unlabeled = 1,
    Test = 2,
}

/// Opaque fingerprint dataset.
pub struct MtwDataset {
    inner: Dataset,
}

/// Opaque trained model (weights, AP mask and coordinate scaler).
pub struct MtwModel {
    inner: TrainedModel,
}

/// One decoded prediction; coordinates in the dataset's meter frame.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MtwPrediction {
    pub building: u8,
    pub floor: u8,
    pub longitude: f64,
    pub latitude: f64,
}

/// Aggregate EvAAL metrics.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MtwEvalSummary {
    pub evaal_error: f64,
    pub gamma: f64,
    pub b_miss: f64,
    pub f_miss: f64,
    pub mean_euc: f64,
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> MtwStatus {
    match e {
        Error::Io { .. } => MtwStatus::Io,
        Error::Parse { .. } => MtwStatus::Parse,
        Error::Validation(_) => MtwStatus::Validation,
        Error::Shape { .. } => MtwStatus::Shape,
        Error::Domain(_) => MtwStatus::Domain,
        Error::Schema(_) | Error::Checkpoint(_) => MtwStatus::Checkpoint,
        Error::Divergence { .. } => MtwStatus::Divergence,
        Error::Config(_) => MtwStatus::Config,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (MtwStatus, String)>) -> MtwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MtwStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MtwStatus::Panic
        }
    }
}

fn core(e: Error) -> (MtwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MtwStatus, String) {
    (MtwStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn path_arg(p: *const c_char) -> Result<String, (MtwStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (MtwStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn mtw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a UJIIndoorLoc-format CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtw_dataset_load(path: *const c_char, role: MtwRole, out: *mut *mut MtwDataset) -> MtwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let role = match role {
            MtwRole::Labeled => Role::Labeled,
            MtwRole::Unlabeled => Role::Unlabeled,
            MtwRole::Test => Role::Test,
        };
        let inner = load_csv(path, role).map_err(core)?;
        *out = Box::into_raw(Box::new(MtwDataset { inner }));
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from [`mtw_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn mtw_dataset_len(dataset: *const MtwDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtw_dataset_free(dataset: *mut MtwDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a checkpoint written by the `mtwifi` trainer.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtw_model_load(path: *const c_char, out: *mut *mut MtwModel) -> MtwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let inner = TrainedModel::load(path).map_err(core)?;
        *out = Box::into_raw(Box::new(MtwModel { inner }));
        Ok(())
    })
}

/// Number of selected APs the model consumes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from [`mtw_model_load`].
#[no_mangle]
pub unsafe extern "C" fn mtw_model_input_width(model: *const MtwModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.spec.input_width)
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtw_model_free(model: *mut MtwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts every record of `dataset` into `out[0..capacity]`.
///
/// `out_len` always receives the record count; when `capacity` is smaller the
/// call returns `BufferTooSmall` and writes nothing, so callers can size the
/// buffer with a first call using `capacity = 0` and `out = NULL`.
///
/// # Safety
/// Handles must be live; `out` must point to `capacity` writable elements.
#[no_mangle]
pub unsafe extern "C" fn mtw_model_predict(
    model: *const MtwModel,
    dataset: *const MtwDataset,
    out: *mut MtwPrediction,
    capacity: usize,
    out_len: *mut usize,
) -> MtwStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let dataset = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let out_len = out_len.as_mut().ok_or_else(|| null("out_len"))?;
        *out_len = dataset.inner.len();
        if capacity < dataset.inner.len() {
            return Err((
                MtwStatus::BufferTooSmall,
                format!("need room for {} predictions, got {capacity}", dataset.inner.len()),
            ));
        }
        if out.is_null() && !dataset.inner.is_empty() {
            return Err(null("out"));
        }
        let predictions = model.inner.predict(&dataset.inner).map_err(core)?;
        for (i, p) in predictions.iter().enumerate() {
            *out.add(i) = MtwPrediction {
                building: p.building,
                floor: p.floor,
                longitude: p.longitude,
                latitude: p.latitude,
            };
        }
        Ok(())
    })
}

/// EvAAL report of `model` on a labeled or test dataset.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mtw_model_evaluate(
    model: *const MtwModel,
    dataset: *const MtwDataset,
    out: *mut MtwEvalSummary,
) -> MtwStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let dataset = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = model.inner.evaluate(&dataset.inner).map_err(core)?;
        *out = MtwEvalSummary {
            evaal_error: r.evaal_error,
            gamma: r.gamma,
            b_miss: r.b_miss,
            f_miss: r.f_miss,
            mean_euc: r.mean_euc,
            n: r.n,
        };
        Ok(())
    })
}

/// Relative improvement in percent of `error_prop` over `error_ref`.
///
/// # Safety
/// `out_eta` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtw_improvement(error_ref: f64, error_prop: f64, out_eta: *mut f64) -> MtwStatus {
    guard(|| {
        let out = out_eta.as_mut().ok_or_else(|| null("out_eta"))?;
        *out = improvement(error_ref, error_prop).map_err(core)?.eta;
        Ok(())
    })
}
