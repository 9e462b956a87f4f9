//! C ABI over the kgrag engine.
//!
//! Every fallible call returns a [`KgragStatus`]. On failure the message is
//! available from [`kgrag_last_error_message`] on the same thread. Strings
//! handed out through `out_json` pointers are owned by the caller and must be
//! released with [`kgrag_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kgrag::cost::CostModel;
use kgrag::embedding::{cosine_similarity, EmbeddingVector};
use kgrag::kg::{Depth, ReviewFlags, ReviewStatus};
use kgrag::llm::CannedLlm;
use kgrag::{AnswerMode, AskRequest, Engine, Error};

/// Opaque engine handle.
pub struct KgragEngine {
    inner: Engine,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgragStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotFound = 2,
    GraphNotBuilt = 3,
    Conflict = 4,
    ProviderFailed = 5,
    Io = 6,
    Internal = 7,
    Panic = 8,
}

impl From<&Error> for KgragStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidRequest(_)
            | Error::Config(_)
            | Error::UnknownProvider { .. }
            | Error::Encoding { .. }
            | Error::DimensionMismatch { .. } => KgragStatus::InvalidArgument,
            Error::UnknownNode(_) | Error::TripleNotFound(_) => KgragStatus::NotFound,
            Error::GraphNotBuilt => KgragStatus::GraphNotBuilt,
            Error::InvalidTransition { .. } => KgragStatus::Conflict,
            Error::Provider { .. } | Error::ExtractionFailed { .. } => KgragStatus::ProviderFailed,
            Error::Io(_) | Error::Ingest { .. } => KgragStatus::Io,
            _ => KgragStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(message).ok());
}

struct Failure(KgragStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(KgragStatus::from(&e), e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(KgragStatus::InvalidArgument, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KgragStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KgragStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            KgragStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn engine_arg<'a>(p: *const KgragEngine) -> Result<&'a Engine, Failure> {
    p.as_ref().map(|e| &e.inner).ok_or_else(|| invalid("engine handle is null"))
}

unsafe fn write_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("`out_json` is null"));
    }
    let text = serde_json::to_string(value).map_err(|e| Failure(KgragStatus::Internal, e.to_string()))?;
    let text = CString::new(text).map_err(|e| Failure(KgragStatus::Internal, e.to_string()))?;
    *out = text.into_raw();
    Ok(())
}

unsafe fn write_f64(out: *mut f64, value: f64) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = value;
    Ok(())
}

/// Opens (or creates) a data directory.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrag_engine_open(data_dir: *const c_char, out: *mut *mut KgragEngine) -> KgragStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("`out` is null"));
        }
        let dir = str_arg(data_dir, "data_dir")?;
        let engine = Engine::open(dir)?;
        *out = Box::into_raw(Box::new(KgragEngine { inner: engine }));
        Ok(())
    })
}

/// # Safety
/// `engine` must come from [`kgrag_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kgrag_engine_free(engine: *mut KgragEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// Pointers must be valid NUL-terminated strings and a live engine.
#[no_mangle]
pub unsafe extern "C" fn kgrag_ingest_text(
    engine: *const KgragEngine,
    doc_id: *const c_char,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let report = engine.ingest_text(str_arg(doc_id, "doc_id")?, str_arg(text, "text")?)?;
        write_json(out_json, &report)
    })
}

/// Ingests a file or directory of `.txt`/`.md` files.
///
/// # Safety
/// Pointers must be valid NUL-terminated strings and a live engine.
#[no_mangle]
pub unsafe extern "C" fn kgrag_ingest_path(
    engine: *const KgragEngine,
    path: *const c_char,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let report = engine.ingest_path(Path::new(str_arg(path, "path")?))?;
        write_json(out_json, &report)
    })
}

/// Extracts triples. With a non-null `canned_dir`, replays `<chunk_id>.txt`
/// files from it instead of calling the configured provider.
///
/// # Safety
/// `canned_dir` may be null; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kgrag_extract(
    engine: *const KgragEngine,
    canned_dir: *const c_char,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let report = if canned_dir.is_null() {
            engine.extract()?
        } else {
            engine.extract_with(&CannedLlm::new(str_arg(canned_dir, "canned_dir")?))?
        };
        write_json(out_json, &report)
    })
}

/// Replaces the triple store with a reviewed CSV document.
///
/// # Safety
/// Pointers must be valid NUL-terminated strings and a live engine.
#[no_mangle]
pub unsafe extern "C" fn kgrag_import_triples(
    engine: *const KgragEngine,
    csv: *const c_char,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let report = engine.import_triples(str_arg(csv, "csv")?.as_bytes())?;
        write_json(out_json, &report)
    })
}

/// Approves (`approve != 0`) or rejects a pending triple.
///
/// # Safety
/// `engine` must be live.
#[no_mangle]
pub unsafe extern "C" fn kgrag_review(engine: *const KgragEngine, triple_id: usize, approve: c_int) -> KgragStatus {
    guard(|| {
        let status = if approve != 0 {
            ReviewStatus::Approved
        } else {
            ReviewStatus::Rejected
        };
        engine_arg(engine)?.review(triple_id, status, ReviewFlags::default())?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid and `engine` live.
#[no_mangle]
pub unsafe extern "C" fn kgrag_build_graph(engine: *const KgragEngine, out_json: *mut *mut c_char) -> KgragStatus {
    guard(|| {
        let report = engine_arg(engine)?.build_graph()?;
        write_json(out_json, &report)
    })
}

/// Answers a question. `mode` is `llm_only`, `rag` or `kgrag` (null means
/// `kgrag`).
///
/// # Safety
/// Pointers must be valid NUL-terminated strings (or null for `mode`).
#[no_mangle]
pub unsafe extern "C" fn kgrag_ask(
    engine: *const KgragEngine,
    query: *const c_char,
    mode: *const c_char,
    use_cache: c_int,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let mode: AnswerMode = if mode.is_null() {
            AnswerMode::Kgrag
        } else {
            str_arg(mode, "mode")?.parse()?
        };
        let mut request = AskRequest::new(str_arg(query, "query")?, mode);
        request.session_id = "ffi".into();
        request.use_cache = use_cache != 0;
        let response = engine.ask(&request)?;
        write_json(out_json, &response)
    })
}

/// Neighborhood of an entity as graph JSON. A negative `depth` means
/// unbounded.
///
/// # Safety
/// Pointers must be valid and `engine` live.
#[no_mangle]
pub unsafe extern "C" fn kgrag_neighborhood(
    engine: *const KgragEngine,
    entity: *const c_char,
    depth: i32,
    out_json: *mut *mut c_char,
) -> KgragStatus {
    guard(|| {
        let depth = if depth < 0 {
            Depth::Max
        } else {
            Depth::Hops(depth as usize)
        };
        let graph = engine_arg(engine)?.neighborhood(str_arg(entity, "entity")?, depth)?;
        write_json(out_json, &graph)
    })
}

/// # Safety
/// Pointers must be valid and `engine` live.
#[no_mangle]
pub unsafe extern "C" fn kgrag_health(engine: *const KgragEngine, out_json: *mut *mut c_char) -> KgragStatus {
    guard(|| {
        let health = engine_arg(engine)?.health();
        write_json(out_json, &health)
    })
}

/// Estimated USD cost from the bundled cost table.
///
/// # Safety
/// `provider` must be a valid string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kgrag_cost_estimate(
    provider: *const c_char,
    n_queries: u64,
    cache_hit_rate: f64,
    out: *mut f64,
) -> KgragStatus {
    guard(|| {
        let usd = CostModel::default().estimate_cost(str_arg(provider, "provider")?, n_queries, cache_hit_rate)?;
        write_f64(out, usd)
    })
}

/// # Safety
/// Both labels must be valid strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kgrag_cost_ratio(a: *const c_char, b: *const c_char, out: *mut f64) -> KgragStatus {
    guard(|| {
        let ratio = CostModel::default().cost_ratio(str_arg(a, "a")?, str_arg(b, "b")?)?;
        write_f64(out, ratio)
    })
}

/// # Safety
/// `a` and `b` must each point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrag_cosine_similarity(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> KgragStatus {
    guard(|| {
        if len > 0 && (a.is_null() || b.is_null()) {
            return Err(invalid("vector pointer is null"));
        }
        let slice = |p: *const f64| if len == 0 { &[][..] } else { std::slice::from_raw_parts(p, len) };
        let score = cosine_similarity(&EmbeddingVector(slice(a).to_vec()), &EmbeddingVector(slice(b).to_vec()))?;
        write_f64(out, score)
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next kgrag call on the same thread.
#[no_mangle]
pub extern "C" fn kgrag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from a kgrag `out_json` parameter, or be null.
#[no_mangle]
pub unsafe extern "C" fn kgrag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
