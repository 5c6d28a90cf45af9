//! C interface to replytriage.
//!
//! Every fallible function returns an [`RtStatus`]. On failure a message is
//! kept per thread and can be read with [`rt_last_error_message`]. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with [`rt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use replytriage::clock::{Clock, FixedClock, SystemClock};
use replytriage::corpus::{CorpusError, Corpus};
use replytriage::evaluation::{self, LikertRecord};
use replytriage::relevance::{RelevanceBackends, Strategy};
use replytriage::service::{run_pipeline, ResultStore};
use replytriage::toxicity::{LexiconScorer, ToxicityConfig};
use replytriage::triage::{Classifiers, TriageConfig};
use replytriage::Category;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Schema = 4,
    Integrity = 5,
    Backend = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtCategory {
    C1 = 1,
    C2 = 2,
    C3 = 3,
    C4 = 4,
    Pending = 5,
}

impl From<Category> for RtCategory {
    fn from(c: Category) -> Self {
        match c {
            Category::C1 => RtCategory::C1,
            Category::C2 => RtCategory::C2,
            Category::C3 => RtCategory::C3,
            Category::C4 => RtCategory::C4,
            Category::Pending => RtCategory::Pending,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RtMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

/// Opaque loaded corpus.
pub struct RtCorpus {
    inner: Arc<Corpus>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: RtStatus, message: impl Into<String>) -> RtStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> RtStatus) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RtStatus::Internal, "panic inside replytriage"),
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, RtStatus> {
    if p.is_null() {
        return Err(fail(RtStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(RtStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a corpus JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_corpus_load(path: *const c_char, out: *mut *mut RtCorpus) -> RtStatus {
    guard(|| {
        if out.is_null() {
            return fail(RtStatus::NullPointer, "out is null");
        }
        *out = std::ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match replytriage::load_corpus(path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(RtCorpus { inner: Arc::new(c) }));
                RtStatus::Ok
            }
            Err(e) => {
                let status = match &e {
                    CorpusError::Io { .. } => RtStatus::Io,
                    CorpusError::Schema { .. } => RtStatus::Schema,
                    CorpusError::Integrity(_) => RtStatus::Integrity,
                };
                fail(status, e.to_string())
            }
        }
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`rt_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_corpus_free(corpus: *mut RtCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a live handle; each out pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn rt_corpus_counts(
    corpus: *const RtCorpus,
    posts: *mut usize,
    articles: *mut usize,
    replies: *mut usize,
) -> RtStatus {
    let Some(c) = corpus.as_ref() else {
        return fail(RtStatus::NullPointer, "corpus is null");
    };
    let (p, a, r) = c.inner.cardinalities();
    for (ptr, v) in [(posts, p), (articles, a), (replies, r)] {
        if !ptr.is_null() {
            *ptr = v;
        }
    }
    RtStatus::Ok
}

#[no_mangle]
pub extern "C" fn rt_categorize(toxic: bool, relevant: bool) -> RtCategory {
    replytriage::categorize(toxic, relevant).into()
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_is_toxic(value: f64, threshold: f64, out: *mut bool) -> RtStatus {
    if out.is_null() {
        return fail(RtStatus::NullPointer, "out is null");
    }
    let config = ToxicityConfig {
        threshold,
        ..ToxicityConfig::default()
    };
    if let Err(e) = config.validate() {
        return fail(RtStatus::InvalidArgument, e.to_string());
    }
    if !(0.0..=1.0).contains(&value) {
        return fail(RtStatus::InvalidArgument, format!("score {value} is outside [0, 1]"));
    }
    *out = value >= config.threshold;
    RtStatus::Ok
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_confusion_metrics(
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
    out: *mut RtMetrics,
) -> RtStatus {
    if out.is_null() {
        return fail(RtStatus::NullPointer, "out is null");
    }
    match evaluation::confusion_metrics(tp, fp, fn_, tn) {
        Ok(m) => {
            *out = RtMetrics {
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                precision_undefined: m.precision_undefined,
                recall_undefined: m.recall_undefined,
            };
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::InvalidArgument, e.to_string()),
    }
}

/// # Safety
/// `a` and `b` must each point to `n` readable bools; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_cohen_kappa(
    a: *const bool,
    b: *const bool,
    n: usize,
    out: *mut f64,
) -> RtStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return fail(RtStatus::NullPointer, "null argument");
    }
    let a = std::slice::from_raw_parts(a, n);
    let b = std::slice::from_raw_parts(b, n);
    match evaluation::cohen_kappa(a, b) {
        Ok(k) => {
            *out = k;
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::InvalidArgument, e.to_string()),
    }
}

/// Collapses five 1 to 5 ratings to a binary toxicity label.
///
/// # Safety
/// `ratings` must point to 5 readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_collapse_likert(ratings: *const u8, out: *mut bool) -> RtStatus {
    if ratings.is_null() || out.is_null() {
        return fail(RtStatus::NullPointer, "null argument");
    }
    let ratings = std::slice::from_raw_parts(ratings, 5);
    match LikertRecord::new("ffi", ratings) {
        Ok(r) => {
            *out = evaluation::collapse_likert(&r);
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::InvalidArgument, e.to_string()),
    }
}

/// Classifies every reply with the bundled lexicon scorer and keyword
/// relevance. Results are cached in `cache_path` when it is not NULL.
/// `*summary_json` receives the run summary as JSON. When `source_date_epoch`
/// is non-negative it fixes every written timestamp.
///
/// # Safety
/// `corpus` must be a live handle, `cache_path` NULL or a NUL-terminated
/// string, and `summary_json` writable.
#[no_mangle]
pub unsafe extern "C" fn rt_classify_keyword(
    corpus: *const RtCorpus,
    cache_path: *const c_char,
    source_date_epoch: i64,
    summary_json: *mut *mut c_char,
) -> RtStatus {
    guard(|| {
        let Some(c) = corpus.as_ref() else {
            return fail(RtStatus::NullPointer, "corpus is null");
        };
        if summary_json.is_null() {
            return fail(RtStatus::NullPointer, "summary_json is null");
        }
        *summary_json = std::ptr::null_mut();
        let store = if cache_path.is_null() {
            ResultStore::in_memory()
        } else {
            let path = match path_arg(cache_path) {
                Ok(p) => p,
                Err(s) => return s,
            };
            match ResultStore::open(path) {
                Ok(s) => s,
                Err(e) => return fail(RtStatus::Io, e.to_string()),
            }
        };
        let clock: Arc<dyn Clock> = if source_date_epoch >= 0 {
            match FixedClock::at_epoch(source_date_epoch) {
                Some(c) => Arc::new(c),
                None => return fail(RtStatus::InvalidArgument, "source_date_epoch out of range"),
            }
        } else {
            Arc::new(SystemClock)
        };
        let deps = Classifiers {
            toxicity: Arc::new(LexiconScorer::bundled()),
            relevance: RelevanceBackends::default(),
            clock,
        };
        let config = TriageConfig {
            strategy: Some(Strategy::Keyword),
            ..TriageConfig::default()
        };
        match run_pipeline(&c.inner, &deps, &config, &store, 1) {
            Ok(summary) => {
                let json = serde_json::to_string(&summary).expect("summary serializes");
                *summary_json = into_c_string(json);
                if summary.pending() > 0 {
                    return fail(
                        RtStatus::Backend,
                        format!("{} replies pending", summary.pending()),
                    );
                }
                RtStatus::Ok
            }
            Err(e) => fail(RtStatus::Backend, e.to_string()),
        }
    })
}

