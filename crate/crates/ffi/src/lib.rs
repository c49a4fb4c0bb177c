//! C ABI over `notemine`.
//!
//! Every fallible call returns an [`NmStatus`]. On failure the message is kept
//! per thread and read with [`nm_last_error`]. Objects cross the boundary as
//! opaque handles that the caller releases with the matching `_free` call.
//! Strings returned through `char **` must be released with [`nm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use notemine::discriminate::{chi2_sf, chi_square};
use notemine::lda::{dominant_topics, TopicModel};
use notemine::negation::{negate_text, NegationDetector, TriggerLexicon, DEFAULT_WINDOW};
use notemine::pipeline::{self, RunOptions};
use notemine::{Error, PipelineConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Pipeline = 6,
    Panic = 7,
}

/// Fitted topic model.
pub struct NmModel {
    model: TopicModel,
    dominant: Vec<(usize, f64)>,
}

/// Negation detector with its trigger lexicon.
pub struct NmNegator {
    detector: NegationDetector,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> NmStatus {
    match e {
        Error::Io { .. } => NmStatus::Io,
        Error::Malformed { .. } | Error::Json(_) | Error::Lexicon(_) | Error::Config(_) | Error::Model(_) => {
            NmStatus::Parse
        }
        Error::InvalidArgument(_) | Error::UnknownTerm(_) => NmStatus::InvalidArgument,
        Error::Stage { .. } | Error::EmptyCorpus | Error::DuplicateNote { .. } => NmStatus::Pipeline,
    }
}

/// Run `f`, turning errors and panics into a status plus the thread's message.
fn guard(f: impl FnOnce() -> Result<(), NmStatus>) -> NmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NmStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            NmStatus::Panic
        }
    }
}

fn fail(e: Error) -> NmStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> NmStatus {
    set_error(format!("{what} is null"));
    NmStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, NmStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        NmStatus::InvalidUtf8
    })
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), NmStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("string contains a nul byte");
        NmStatus::InvalidArgument
    })?;
    // SAFETY: caller checked `out` for null.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn nm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn nm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Run the whole pipeline from a config file.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nm_run_pipeline(config_path: *const c_char, resume: bool) -> NmStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        pipeline::configure_threads().map_err(fail)?;
        let cfg = PipelineConfig::load(Path::new(path)).map_err(fail)?;
        pipeline::run(&cfg, &RunOptions { resume }).map_err(fail)?;
        Ok(())
    })
}

/// Create a negation detector. A null `lexicon_path` selects the bundled
/// lexicon; `window` 0 selects the default of 5.
///
/// # Safety
/// `lexicon_path` must be null or a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nm_negator_new(
    lexicon_path: *const c_char,
    window: usize,
    out: *mut *mut NmNegator,
) -> NmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let lexicon = if lexicon_path.is_null() {
            TriggerLexicon::default()
        } else {
            TriggerLexicon::load(Path::new(str_arg(lexicon_path, "lexicon_path")?)).map_err(fail)?
        };
        let window = if window == 0 { DEFAULT_WINDOW } else { window };
        let handle = Box::new(NmNegator {
            detector: NegationDetector::new(lexicon, window),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// # Safety
/// `negator` must be null or a handle from [`nm_negator_new`].
#[no_mangle]
pub unsafe extern "C" fn nm_negator_free(negator: *mut NmNegator) {
    if !negator.is_null() {
        drop(Box::from_raw(negator));
    }
}

/// Tokenize one sentence and fuse negated spans. Writes the tokens joined by
/// single spaces into `*out`.
///
/// # Safety
/// Pointers must be valid; `*out` must be released with [`nm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn nm_negate(
    negator: *const NmNegator,
    sentence: *const c_char,
    out: *mut *mut c_char,
) -> NmStatus {
    guard(|| {
        let n = negator.as_ref().ok_or_else(|| null("negator"))?;
        let text = str_arg(sentence, "sentence")?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(negate_text(&n.detector, text).join(" "), out)
    })
}

/// Pearson chi-square for a 2×k presence table.
///
/// # Safety
/// `present` and `totals` must each point to `k` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nm_chi_square(
    present: *const u64,
    totals: *const u64,
    k: usize,
    chi2: *mut f64,
    dof: *mut usize,
    p_value: *mut f64,
) -> NmStatus {
    guard(|| {
        if present.is_null() || totals.is_null() || chi2.is_null() || dof.is_null() || p_value.is_null() {
            return Err(null("argument"));
        }
        let present = std::slice::from_raw_parts(present, k);
        let totals = std::slice::from_raw_parts(totals, k);
        let r = chi_square(present, totals).map_err(fail)?;
        *chi2 = r.chi2;
        *dof = r.dof;
        *p_value = r.p_value;
        Ok(())
    })
}

/// Upper tail probability of the chi-square distribution.
///
/// # Safety
/// `p_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nm_chi2_sf(x: f64, dof: usize, p_value: *mut f64) -> NmStatus {
    guard(|| {
        if p_value.is_null() {
            return Err(null("p_value"));
        }
        if !x.is_finite() || x < 0.0 {
            set_error(format!("statistic {x} must be finite and non-negative"));
            return Err(NmStatus::InvalidArgument);
        }
        *p_value = chi2_sf(x, dof);
        Ok(())
    })
}

/// Load a model file written by the pipeline.
///
/// # Safety
/// `path` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nm_model_load(path: *const c_char, out: *mut *mut NmModel) -> NmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = TopicModel::load(Path::new(str_arg(path, "path")?)).map_err(fail)?;
        let dominant = dominant_topics(&model)
            .into_iter()
            .map(|a| (a.dominant_topic, a.contribution))
            .collect();
        *out = Box::into_raw(Box::new(NmModel { model, dominant }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`nm_model_load`].
#[no_mangle]
pub unsafe extern "C" fn nm_model_free(model: *mut NmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of topics, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nm_model_num_topics(model: *const NmModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_topics())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nm_model_num_docs(model: *const NmModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_docs())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nm_model_vocab_size(model: *const NmModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.vocab_size())
}

unsafe fn copy_row(row: Option<&Vec<f64>>, out: *mut f64, len: usize, what: &str) -> Result<(), NmStatus> {
    let row = row.ok_or_else(|| {
        set_error(format!("{what} index out of range"));
        NmStatus::InvalidArgument
    })?;
    if out.is_null() {
        return Err(null("out"));
    }
    if len != row.len() {
        set_error(format!("{what} row has {} entries, buffer holds {len}", row.len()));
        return Err(NmStatus::InvalidArgument);
    }
    ptr::copy_nonoverlapping(row.as_ptr(), out, len);
    Ok(())
}

/// Copy the topic mixture of document `doc` into `out` (`len` = number of topics).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nm_model_theta(model: *const NmModel, doc: usize, out: *mut f64, len: usize) -> NmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        copy_row(m.model.theta.get(doc), out, len, "document")
    })
}

/// Copy the word distribution of `topic` into `out` (`len` = vocabulary size).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nm_model_phi(model: *const NmModel, topic: usize, out: *mut f64, len: usize) -> NmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        copy_row(m.model.phi.get(topic), out, len, "topic")
    })
}

/// Dominant topic (0-based) and its contribution for document `doc`.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nm_model_dominant_topic(
    model: *const NmModel,
    doc: usize,
    topic: *mut usize,
    contribution: *mut f64,
) -> NmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if topic.is_null() || contribution.is_null() {
            return Err(null("output"));
        }
        let &(t, c) = m.dominant.get(doc).ok_or_else(|| {
            set_error("document index out of range");
            NmStatus::InvalidArgument
        })?;
        *topic = t;
        *contribution = c;
        Ok(())
    })
}

/// Term string for vocabulary id `term`.
///
/// # Safety
/// `*out` must be released with [`nm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn nm_model_term(model: *const NmModel, term: usize, out: *mut *mut c_char) -> NmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = m.model.terms.get(term).cloned().ok_or_else(|| {
            set_error("term index out of range");
            NmStatus::InvalidArgument
        })?;
        out_string(s, out)
    })
}

/// Note id of document `doc`.
///
/// # Safety
/// `*out` must be released with [`nm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn nm_model_note_id(model: *const NmModel, doc: usize, out: *mut *mut c_char) -> NmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = m.model.note_ids.get(doc).cloned().ok_or_else(|| {
            set_error("document index out of range");
            NmStatus::InvalidArgument
        })?;
        out_string(s, out)
    })
}
