//! C interface to trained ssdmn models.
//!
//! Every fallible function returns an [`SsdmnStatus`]. On failure the message
//! is available from [`ssdmn_last_error`] on the same thread. Strings handed
//! out by the library must be released with [`ssdmn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde_json::json;
use ssdmn::data::{read_dialogs_with, Dialog};
use ssdmn::models::{load_checkpoint, predict_dialog, ModelParams};
use ssdmn::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsdmnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Config = 6,
    Dimension = 7,
    UnknownLabel = 8,
    Internal = 9,
}

/// A loaded model. Opaque to C.
pub struct SsdmnModel {
    params: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SsdmnStatus {
    match e {
        Error::Io(_) => SsdmnStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Malformed(_) => SsdmnStatus::Parse,
        Error::Checkpoint(_) => SsdmnStatus::Checkpoint,
        Error::Config(_) | Error::UnknownSlot(_) | Error::Empty(_) => SsdmnStatus::Config,
        Error::Dimension(_) | Error::Index(_) => SsdmnStatus::Dimension,
        Error::UnknownLabel(_) => SsdmnStatus::UnknownLabel,
        Error::Cca(_) | Error::NonFinite(_) => SsdmnStatus::Internal,
    }
}

struct Failure(SsdmnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SsdmnStatus::Parse, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsdmnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SsdmnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SsdmnStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SsdmnStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SsdmnStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(SsdmnStatus::Internal, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(SsdmnStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// Load a checkpoint file. On success `*out` owns a model to be released
/// with [`ssdmn_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_model_load(path: *const c_char, out: *mut *mut SsdmnModel) -> SsdmnStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let params = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(SsdmnModel { params }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`ssdmn_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_model_free(model: *mut SsdmnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// JSON description of a model: variant, dimensions, slots, labels.
///
/// # Safety
/// `model` must be a live model; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_model_info(model: *const SsdmnModel, out_json: *mut *mut c_char) -> SsdmnStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        let m = model
            .as_ref()
            .ok_or_else(|| Failure(SsdmnStatus::NullPointer, "`model` is null".into()))?;
        let p = &m.params;
        let info = json!({
            "variant": p.variant,
            "input_dim": p.input_dim(),
            "hidden_dim": p.hidden_dim(),
            "slots": p.tags.slots(),
            "labels": p.tags.iob_labels(),
            "vocab_size": p.embeddings.vocab.len(),
        });
        put_string(out_json, info.to_string())
    })
}

/// Tag every turn of one dialog given as a JSON object
/// (`{id, domain, turns: [{sys_slots, sys_text, user}]}`). The result is the
/// same dialog with `labels` filled in; with `dump_attention` non-zero each
/// turn also carries its attention weights.
///
/// # Safety
/// `model` must be a live model, `dialog_json` NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_tag_dialog(
    model: *const SsdmnModel,
    dialog_json: *const c_char,
    dump_attention: c_int,
    out_json: *mut *mut c_char,
) -> SsdmnStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        *out_json = ptr::null_mut();
        let m = model
            .as_ref()
            .ok_or_else(|| Failure(SsdmnStatus::NullPointer, "`model` is null".into()))?;
        let text = str_arg(dialog_json, "dialog_json")?;
        let line = text.replace('\n', " ");
        let mut dialogs = read_dialogs_with(line.as_bytes(), Path::new("<dialog>"), false)?;
        if dialogs.len() != 1 {
            return Err(Failure(SsdmnStatus::Parse, "expected exactly one dialog".into()));
        }
        let dialog: Dialog = dialogs.remove(0);
        let prepared = m.params.prepare(&dialog)?;
        let predictions = predict_dialog(&m.params, &prepared)?;
        let mut tagged = dialog;
        for (turn, p) in tagged.turns.iter_mut().zip(&predictions) {
            turn.labels = p.labels.clone();
        }
        let mut value = serde_json::to_value(&tagged)?;
        if dump_attention != 0 {
            if let Some(turns) = value["turns"].as_array_mut() {
                for (turn, p) in turns.iter_mut().zip(&predictions) {
                    turn["attention"] = json!({
                        "alpha": p.alpha,
                        "beta": p.beta,
                        "user_memory": p.user_memory,
                        "system_memory": p.system_memory,
                    });
                }
            }
        }
        put_string(out_json, value.to_string())
    })
}

/// Chunk precision, recall and F1 (percent) of aligned label sequences, each
/// given as a JSON array of arrays of label strings.
///
/// # Safety
/// String arguments must be NUL-terminated; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_chunk_f1(
    gold_json: *const c_char,
    pred_json: *const c_char,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> SsdmnStatus {
    guard(|| {
        check_out(out_precision, "out_precision")?;
        check_out(out_recall, "out_recall")?;
        check_out(out_f1, "out_f1")?;
        let gold: Vec<Vec<String>> = serde_json::from_str(str_arg(gold_json, "gold_json")?)?;
        let pred: Vec<Vec<String>> = serde_json::from_str(str_arg(pred_json, "pred_json")?)?;
        let score = ssdmn::eval::evaluate(&gold, &pred)?;
        *out_precision = score.precision();
        *out_recall = score.recall();
        *out_f1 = score.f1();
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssdmn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ssdmn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ssdmn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
