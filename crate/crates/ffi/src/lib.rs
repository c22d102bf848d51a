//! C ABI over the extractor. Every fallible call returns an [`SpStatus`];
//! on failure `sp_last_error_message` describes the error for the calling
//! thread. Strings handed out by the library are released with
//! `sp_string_free`, models with `sp_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spanprompt::assignment::hungarian;
use spanprompt::cli::{full_report, load_model};
use spanprompt::data::parse_jsonl;
use spanprompt::inference::{
    greedy_span, parse_predictions, predict_event, predictions_to_jsonl, DecodeMode, PredictStats,
    DEFAULT_MAX_SPAN_LEN,
};
use spanprompt::neural::ModelParams;
use spanprompt::ontology::{validate_instance, Phase};
use spanprompt::pipeline::Pipeline;
use spanprompt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    /// Bad input data, configuration or checkpoint.
    Validation = 4,
    /// I/O or other failure while running.
    Runtime = 5,
    Panic = 6,
}

/// Loaded checkpoint.
pub struct SpModel {
    params: ModelParams<f32>,
    pipeline: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("no interior nul")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() {
            SpStatus::Validation
        } else {
            SpStatus::Runtime
        };
        Fail(code, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SpStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SpStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn null(name: &str) -> Fail {
    Fail(SpStatus::NullPointer, format!("`{name}` is null"))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(SpStatus::Runtime, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `spanprompt train`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_model_open(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let (params, pipeline) = load_model(Path::new(path))?;
        *out = Box::into_raw(Box::new(SpModel { params, pipeline }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `sp_model_open` and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Decodes every event of a gold-format JSONL document set and returns
/// prediction JSONL in `*out`. `max_span_len` 0 selects the default cap;
/// a non-zero `sequential` runs one pass per slot.
///
/// # Safety
/// `model` must be live, `jsonl` nul-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sp_model_predict_jsonl(
    model: *const SpModel,
    jsonl: *const c_char,
    max_span_len: usize,
    sequential: i32,
    out: *mut *mut c_char,
) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let text = str_arg(jsonl, "jsonl")?;
        let data = parse_jsonl(text, Path::new("<input>"))?;
        let cap = if max_span_len == 0 {
            DEFAULT_MAX_SPAN_LEN
        } else {
            max_span_len
        };
        let mode = if sequential != 0 {
            DecodeMode::Sequential
        } else {
            DecodeMode::Joint
        };
        let mut stats = PredictStats::default();
        let mut preds = Vec::with_capacity(data.len());
        for inst in &data {
            validate_instance(inst, &m.pipeline.ontology).into_result(Phase::Inference)?;
            let ev = m.pipeline.prepare(inst)?;
            preds.push(predict_event(
                &m.params,
                &m.pipeline,
                &ev,
                mode,
                cap,
                &mut stats,
            )?);
        }
        *out = into_c_string(predictions_to_jsonl(&preds))?;
        Ok(())
    })
}

/// Scores prediction JSONL against gold JSONL; `*out` receives the report
/// as JSON, breakdowns included.
///
/// # Safety
/// Both inputs nul-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sp_score_jsonl(
    pred: *const c_char,
    gold: *const c_char,
    out: *mut *mut c_char,
) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let preds = parse_predictions(str_arg(pred, "pred")?, Path::new("<pred>"))?;
        let gold = parse_jsonl(str_arg(gold, "gold")?, Path::new("<gold>"))?;
        *out = into_c_string(full_report(&preds, &gold)?.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Minimum-cost matching of a row-major `rows x cols` non-negative cost
/// matrix. `row_to_col` (length `rows`) receives each row's column or -1.
///
/// # Safety
/// `cost` must hold `rows * cols` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_hungarian(
    cost: *const i64,
    rows: usize,
    cols: usize,
    row_to_col: *mut i64,
    total: *mut i64,
) -> SpStatus {
    guard(|| {
        if cost.is_null() || row_to_col.is_null() || total.is_null() {
            return Err(null("cost/row_to_col/total"));
        }
        if rows == 0 || cols == 0 {
            return Err(Fail(SpStatus::InvalidArgument, "empty cost matrix".into()));
        }
        let flat = std::slice::from_raw_parts(cost, rows * cols);
        let matrix: Vec<Vec<i64>> = flat.chunks(cols).map(<[i64]>::to_vec).collect();
        let m = hungarian(&matrix)?;
        let dst = std::slice::from_raw_parts_mut(row_to_col, rows);
        for (d, c) in dst.iter_mut().zip(&m.row_to_col) {
            *d = c.map_or(-1, |c| c as i64);
        }
        *total = m.total;
        Ok(())
    })
}

/// Best span under the length cap; (0, 0) is the no-argument answer.
///
/// # Safety
/// `start` and `end` must hold `len` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_greedy_span(
    start: *const f32,
    end: *const f32,
    len: usize,
    max_span_len: usize,
    out_start: *mut usize,
    out_end: *mut usize,
    out_score: *mut f64,
) -> SpStatus {
    guard(|| {
        if start.is_null()
            || end.is_null()
            || out_start.is_null()
            || out_end.is_null()
            || out_score.is_null()
        {
            return Err(null("argument"));
        }
        if len == 0 || max_span_len == 0 {
            return Err(Fail(
                SpStatus::InvalidArgument,
                "len and max_span_len must be >= 1".into(),
            ));
        }
        let s = std::slice::from_raw_parts(start, len);
        let e = std::slice::from_raw_parts(end, len);
        if s.iter().chain(e).any(|x| !x.is_finite()) {
            return Err(Fail(SpStatus::InvalidArgument, "non-finite logit".into()));
        }
        let (span, score) = greedy_span(s, e, max_span_len);
        *out_start = span.start;
        *out_end = span.end;
        *out_score = score;
        Ok(())
    })
}
