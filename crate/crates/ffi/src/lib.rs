//! C ABI for the pxtrank scoring pieces.
//!
//! Every function returns a [`PxtStatus`]. On anything but `PXT_STATUS_OK` a
//! message is kept per thread and can be read with [`pxt_last_error`].
//! Models and signal tables are opaque handles owned by the caller and
//! released with their `_free` function. No function unwinds across the
//! boundary; a Rust panic is reported as `PXT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pxtrank::catalog::{load_jsonl, Feature, Locale, ProviderId, SchemaContext, TopicId};
use pxtrank::features::NumericFeatures;
use pxtrank::metrics::{kendall_tau, ndcg_at_k};
use pxtrank::nn::{Checkpoint, RankerModel, SlateInput, Tensor2};
use pxtrank::signal::{compose_multiplicative, PxtSignal, SignalEntry, SignalTable};
use pxtrank::weak::{score_linear, WeightProfile};
use pxtrank::{Error, ErrorClass};

/// Number of numeric features per provider.
pub const PXT_NUMERIC_FEATURES: usize = 8;
const _: () = assert!(PXT_NUMERIC_FEATURES == Feature::COUNT);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Runtime = 5,
    NotFound = 6,
    Panic = 7,
}

/// A loaded ranker checkpoint.
pub struct PxtModel {
    model: RankerModel,
}

/// Normalized provider-topic scores keyed by (topic, provider, locale).
pub struct PxtSignalTable {
    table: SignalTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PxtStatus, msg: impl Into<String>) -> PxtStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> PxtStatus {
    let status = match (&err, err.class()) {
        (Error::Io { .. }, _) => PxtStatus::Io,
        (_, ErrorClass::Usage) => PxtStatus::InvalidArgument,
        (_, ErrorClass::Data) => PxtStatus::Data,
        (_, ErrorClass::Runtime) => PxtStatus::Runtime,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> PxtStatus) -> PxtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PxtStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `p` must be null or point at `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], PxtStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PxtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, PxtStatus> {
    if p.is_null() {
        return Err(fail(PxtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PxtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! try_core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pxt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// NDCG@k of `n` relevance grades given in ranked order.
///
/// # Safety
/// `relevances` must point at `n` doubles and `out` at one writable double.
#[no_mangle]
pub unsafe extern "C" fn pxt_ndcg_at_k(
    relevances: *const f64,
    n: usize,
    k: usize,
    out: *mut f64,
) -> PxtStatus {
    guard(|| {
        let rel = try_status!(slice(relevances, n, "relevances"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        if rel.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return fail(PxtStatus::InvalidArgument, "relevances must be finite and non-negative");
        }
        *out = ndcg_at_k(rel, k);
        PxtStatus::Ok
    })
}

/// Kendall's tau between two orderings of the same `n` ids.
///
/// # Safety
/// `a` and `b` must each point at `n` ids; `out` at one writable double.
#[no_mangle]
pub unsafe extern "C" fn pxt_kendall_tau_u32(
    a: *const u32,
    b: *const u32,
    n: usize,
    out: *mut f64,
) -> PxtStatus {
    guard(|| {
        let a = try_status!(slice(a, n, "a"));
        let b = try_status!(slice(b, n, "b"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        *out = try_core!(kendall_tau(a, b));
        PxtStatus::Ok
    })
}

/// Weak linear score of one provider's `PXT_NUMERIC_FEATURES` normalized
/// features. `weights` may be null for the default profile.
///
/// # Safety
/// `features` (and `weights` unless null) must point at
/// `PXT_NUMERIC_FEATURES` doubles; `out` at one writable double.
#[no_mangle]
pub unsafe extern "C" fn pxt_weak_score(
    features: *const f64,
    weights: *const f64,
    out: *mut f64,
) -> PxtStatus {
    guard(|| {
        let x = try_status!(slice(features, Feature::COUNT, "features"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        let numeric = try_core!(NumericFeatures::new(x.try_into().expect("length checked")));
        let profile = if weights.is_null() {
            WeightProfile::default()
        } else {
            let w = std::slice::from_raw_parts(weights, Feature::COUNT);
            try_core!(WeightProfile::new(w.try_into().expect("length checked")))
        };
        *out = score_linear(&numeric, &profile);
        PxtStatus::Ok
    })
}

/// Loads a checkpoint file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pxt_model_load(path: *const c_char, out: *mut *mut PxtModel) -> PxtStatus {
    guard(|| {
        let path = try_status!(string(path, "path"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        let ckpt = try_core!(Checkpoint::load(Path::new(path)));
        *out = Box::into_raw(Box::new(PxtModel { model: ckpt.model }));
        PxtStatus::Ok
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from `pxt_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pxt_model_free(model: *mut PxtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding width the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pxt_model_embedding_dim(model: *const PxtModel, out: *mut usize) -> PxtStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(PxtStatus::NullPointer, "model or out is null");
        }
        *out = (*model).model.embedding_dim();
        PxtStatus::Ok
    })
}

/// Scores one slate of `n` providers. Inputs are row-major: `mission` and
/// `topic` are `n x dim`, `numeric` is `n x PXT_NUMERIC_FEATURES`. Writes
/// `n` scores to `scores`.
///
/// # Safety
/// All pointers must reference buffers of the sizes above.
#[no_mangle]
pub unsafe extern "C" fn pxt_model_score(
    model: *const PxtModel,
    n: usize,
    dim: usize,
    mission: *const f64,
    topic: *const f64,
    numeric: *const f64,
    scores: *mut f64,
) -> PxtStatus {
    guard(|| {
        if model.is_null() || scores.is_null() {
            return fail(PxtStatus::NullPointer, "model or scores is null");
        }
        if n == 0 {
            return fail(PxtStatus::InvalidArgument, "slate is empty");
        }
        let model = &(*model).model;
        if dim != model.embedding_dim() {
            return fail(
                PxtStatus::InvalidArgument,
                format!("embedding dim {dim} does not match model dim {}", model.embedding_dim()),
            );
        }
        let m = try_status!(slice(mission, n * dim, "mission"));
        let t = try_status!(slice(topic, n * dim, "topic"));
        let x = try_status!(slice(numeric, n * Feature::COUNT, "numeric"));
        let input = SlateInput {
            mission: try_core!(Tensor2::new(n, dim, m.to_vec())),
            topic: try_core!(Tensor2::new(n, dim, t.to_vec())),
            numeric: try_core!(Tensor2::new(n, Feature::COUNT, x.to_vec())),
        };
        let s = try_core!(model.score(&input));
        std::slice::from_raw_parts_mut(scores, n).copy_from_slice(&s);
        PxtStatus::Ok
    })
}

/// Loads a JSONL file of `{topic, provider, locale, score}` entries.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pxt_signal_table_load(
    path: *const c_char,
    out: *mut *mut PxtSignalTable,
) -> PxtStatus {
    guard(|| {
        let path = try_status!(string(path, "path"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        let entries: Vec<SignalEntry> = try_core!(load_jsonl(path, SchemaContext::default()));
        let table = try_core!(SignalTable::from_entries(entries));
        *out = Box::into_raw(Box::new(PxtSignalTable { table }));
        PxtStatus::Ok
    })
}

/// Looks up one score. Returns `PXT_STATUS_NOT_FOUND` when the cell is absent.
///
/// # Safety
/// `table` must be a live handle, the strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pxt_signal_table_score(
    table: *const PxtSignalTable,
    topic: *const c_char,
    provider: *const c_char,
    locale: *const c_char,
    out: *mut f64,
) -> PxtStatus {
    guard(|| {
        if table.is_null() || out.is_null() {
            return fail(PxtStatus::NullPointer, "table or out is null");
        }
        let topic = try_core!(TopicId::new(try_status!(string(topic, "topic"))));
        let provider = try_core!(ProviderId::new(try_status!(string(provider, "provider"))));
        let locale: Locale = try_core!(try_status!(string(locale, "locale")).parse());
        match (*table).table.get(&topic, &provider, &locale) {
            Some(s) => {
                *out = s;
                PxtStatus::Ok
            }
            None => fail(
                PxtStatus::NotFound,
                format!("no score for ({topic}, {provider}, {locale})"),
            ),
        }
    })
}

/// Number of entries in the table.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pxt_signal_table_len(table: *const PxtSignalTable, out: *mut usize) -> PxtStatus {
    guard(|| {
        if table.is_null() || out.is_null() {
            return fail(PxtStatus::NullPointer, "table or out is null");
        }
        *out = (*table).table.len();
        PxtStatus::Ok
    })
}

/// Releases a table handle. Null is ignored.
///
/// # Safety
/// `table` must come from `pxt_signal_table_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pxt_signal_table_free(table: *mut PxtSignalTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Product of `n` other ranking signals and a provider-topic score.
///
/// # Safety
/// `others` must point at `n` doubles and `out` at one writable double.
#[no_mangle]
pub unsafe extern "C" fn pxt_compose_multiplicative(
    others: *const f64,
    n: usize,
    pxt_score: f64,
    out: *mut f64,
) -> PxtStatus {
    guard(|| {
        let others = try_status!(slice(others, n, "others"));
        if out.is_null() {
            return fail(PxtStatus::NullPointer, "out is null");
        }
        let signal = PxtSignal {
            content_id: String::new(),
            score: pxt_score,
            topics: Vec::new(),
            flags: Vec::new(),
        };
        *out = try_core!(compose_multiplicative(others, &signal));
        PxtStatus::Ok
    })
}
