//! C interface. Handles are opaque; every call returns a [`SproverCode`]
//! and leaves a message for [`sprover_last_error`] when it fails.
//!
//! Strings handed out by the library are owned by the caller and released
//! with [`sprover_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use sprover::compile::{self, CompileError, CompileOptions, Compiled, SearchPath};
use sprover::ids::SpanId;
use sprover::protocol::{FeedbackKind, ServerMessage};
use sprover::stm::{ProofMode, ProverWorker, Session, SessionConfig, SpanStatus};
use sprover::taskqueue::{TaskQueue, Transport};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SproverCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    OutOfRange = 3,
    /// The document has errors outside proofs.
    Document = 4,
    /// A proof failed.
    Proof = 5,
    Io = 6,
    Queue = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SproverSpanState {
    Unknown = 0,
    Processing = 1,
    Processed = 2,
    Failed = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SproverSpan {
    pub id: i64,
    /// In characters.
    pub offset: usize,
    pub length: usize,
    pub state: SproverSpanState,
}

/// An interactive document.
pub struct SproverSession {
    session: Session,
    revision: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let c = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(code: SproverCode, message: impl Into<String>) -> SproverCode {
    set_error(message);
    code
}

fn guard(f: impl FnOnce() -> SproverCode) -> SproverCode {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(SproverCode::Panic, "internal error"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, SproverCode> {
    if p.is_null() {
        return Err(fail(SproverCode::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SproverCode::InvalidUtf8, "string is not UTF-8"))
}

fn out_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(code) => return code,
        }
    };
}

macro_rules! non_null {
    ($p:expr) => {
        if $p.is_null() {
            return fail(SproverCode::NullPointer, concat!("null ", stringify!($p)));
        }
    };
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sprover_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn sprover_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sprover_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session. `workers` = 0 checks proofs in the calling thread.
///
/// # Safety
/// `out` points to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_new(workers: u32, out: *mut *mut SproverSession) -> SproverCode {
    guard(|| {
        non_null!(out);
        let mode = if workers == 0 {
            ProofMode::Local
        } else {
            match TaskQueue::new(workers as i64, Transport::thread(ProverWorker::new)) {
                Ok(q) => ProofMode::Queue(q),
                Err(e) => return fail(SproverCode::Queue, e.to_string()),
            }
        };
        let session = Session::new(SessionConfig { mode, ..SessionConfig::default() });
        *out = Box::into_raw(Box::new(SproverSession { session, revision: 0 }));
        SproverCode::Ok
    })
}

/// # Safety
/// `session` is NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_free(session: *mut SproverSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Replaces the document text. Unchanged leading spans keep their ids.
///
/// # Safety
/// `session` is a live handle, `text` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_set_text(
    session: *mut SproverSession,
    text_ptr: *const c_char,
) -> SproverCode {
    guard(|| {
        non_null!(session);
        let t = try_ffi!(text(text_ptr));
        let s = &mut *session;
        s.session.update_text(t);
        s.revision += 1;
        SproverCode::Ok
    })
}

/// Checks the document with the given spans in view, then waits up to
/// `timeout_ms` for delegated proofs.
///
/// # Safety
/// `session` is a live handle; `span_ids` points to `len` ids (may be NULL
/// when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn sprover_session_run(
    session: *mut SproverSession,
    span_ids: *const i64,
    len: usize,
    timeout_ms: u64,
) -> SproverCode {
    guard(|| {
        non_null!(session);
        if len > 0 {
            non_null!(span_ids);
        }
        let perspective: Vec<SpanId> = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(span_ids, len).iter().map(|&i| SpanId(i)).collect()
        };
        let s = &mut (*session).session;
        s.run(&perspective);
        s.wait_idle(Duration::from_millis(timeout_ms));
        SproverCode::Ok
    })
}

/// # Safety
/// `session` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_span_count(session: *const SproverSession) -> usize {
    if session.is_null() {
        return 0;
    }
    (*session).session.spans().len()
}

/// # Safety
/// `session` is a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_span(
    session: *const SproverSession,
    index: usize,
    out: *mut SproverSpan,
) -> SproverCode {
    guard(|| {
        non_null!(session);
        non_null!(out);
        let s = &(*session).session;
        let Some(span) = s.spans().get(index) else {
            return fail(SproverCode::OutOfRange, format!("no span {index}"));
        };
        let state = match s.status(span.id) {
            None => SproverSpanState::Unknown,
            Some(SpanStatus::Processing) => SproverSpanState::Processing,
            Some(SpanStatus::Processed) => SproverSpanState::Processed,
            Some(SpanStatus::Failed { .. }) => SproverSpanState::Failed,
        };
        *out = SproverSpan { id: span.id.0, offset: span.offset, length: span.len_chars(), state };
        SproverCode::Ok
    })
}

/// Takes the feedback produced since the last call, as a JSON array of
/// protocol feedback objects.
///
/// # Safety
/// `session` is a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_feedback_json(
    session: *mut SproverSession,
    out: *mut *mut c_char,
) -> SproverCode {
    guard(|| {
        non_null!(session);
        non_null!(out);
        let s = &mut *session;
        s.session.poll();
        let revision = s.revision;
        let msgs: Vec<ServerMessage> = s
            .session
            .drain_events()
            .iter()
            .filter_map(|l| FeedbackKind::of_event(&l.event))
            .map(|(span_id, kind)| ServerMessage::Feedback { span_id, revision, kind })
            .collect();
        match serde_json::to_string(&msgs) {
            Ok(j) => {
                *out = out_string(j);
                SproverCode::Ok
            }
            Err(e) => fail(SproverCode::Panic, e.to_string()),
        }
    })
}

/// Runs a query after `span_id`. The answer, or the error, goes to `out`
/// in both cases.
///
/// # Safety
/// `session` is a live handle, `query` a NUL-terminated string, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sprover_session_query(
    session: *mut SproverSession,
    span_id: i64,
    query: *const c_char,
    out: *mut *mut c_char,
) -> SproverCode {
    guard(|| {
        non_null!(session);
        non_null!(out);
        let q = try_ffi!(text(query));
        match (*session).session.query_at(SpanId(span_id), q) {
            Ok(answer) => {
                *out = out_string(answer);
                SproverCode::Ok
            }
            Err(e) => {
                *out = out_string(e.clone());
                fail(SproverCode::Document, e)
            }
        }
    })
}

fn compile_code<T>(r: Result<Compiled<T>, CompileError>, exit: *mut i32) -> SproverCode {
    let (code, status) = match r {
        Ok(c) if c.failures.is_empty() => (c.exit_code(), SproverCode::Ok),
        Ok(c) => {
            let names: Vec<&str> = c.failures.iter().map(|(n, _)| n.as_str()).collect();
            (c.exit_code(), fail(SproverCode::Proof, format!("failed proofs: {}", names.join(", "))))
        }
        Err(e) => {
            let kind = match &e {
                CompileError::Document { .. } | CompileError::Stale { .. } => SproverCode::Document,
                CompileError::Io { .. } | CompileError::Format { .. } => SproverCode::Io,
                CompileError::Queue(_) => SproverCode::Queue,
            };
            let message = match &e {
                CompileError::Document { diagnostics, .. } => {
                    diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
                }
                other => other.to_string(),
            };
            (e.exit_code(), fail(kind, message))
        }
    };
    if !exit.is_null() {
        // SAFETY: checked non-null; the caller provides writable storage
        unsafe { *exit = code };
    }
    status
}

fn options(workers: u32, include: Option<&str>) -> CompileOptions {
    let dirs = include.map(|i| std::env::split_paths(i).collect()).unwrap_or_default();
    CompileOptions { search: SearchPath::with_env(dirs), ..CompileOptions::workers(workers as usize) }
}

/// Compiles a `.v` file to `.vo`, or to `.vio` when `quick`. `include` is
/// NULL or a colon-separated search path. `exit_code`, when not NULL,
/// receives the command-line exit status.
///
/// # Safety
/// `path` is a NUL-terminated string; `include` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn sprover_compile(
    path: *const c_char,
    workers: u32,
    quick: bool,
    include: *const c_char,
    exit_code: *mut i32,
) -> SproverCode {
    guard(|| {
        let p = try_ffi!(text(path));
        let inc = if include.is_null() { None } else { Some(try_ffi!(text(include))) };
        let opts = options(workers, inc);
        if quick {
            compile_code(compile::compile_quick(Path::new(p), &opts), exit_code)
        } else {
            compile_code(compile::compile_full(Path::new(p), &opts), exit_code)
        }
    })
}

/// Completes a `.vio` file into a `.vo`.
///
/// # Safety
/// `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sprover_vio2vo(path: *const c_char, workers: u32, exit_code: *mut i32) -> SproverCode {
    guard(|| {
        let p = try_ffi!(text(path));
        compile_code(compile::vio2vo(Path::new(p), &options(workers, None)), exit_code)
    })
}
