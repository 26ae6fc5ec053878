//! Batch compilation: the full chain (`.v` to `.vo`), the quick chain
//! (`.v` to `.vio`) and its completion (`vio2vo`).

pub mod bench;
pub mod format;
pub mod loader;

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::mpsc::channel;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use format::{
    FileEntry, FormatError, Header, ModuleEntry, PendingProof, ProofOutcome, ProofRecord, SpanRecord, VioFile, VoFile,
    FORMAT_VERSION, VIO_MAGIC, VO_MAGIC,
};
pub use loader::{SearchPath, PATH_VAR};

use crate::cancel::CancelSwitch;
use crate::digest::Digest;
use crate::ids::{ExtrudedKey, SpanId};
use crate::kernel::{check_swf_with, EnvEntry, Environment, Forced, PromiseStatus, ProofPromise};
use crate::stm::{
    ModuleLoader, ProofMode, ProverRequest, ProverResponse, ProverTask, ProverWorker, Session, SessionConfig, SpanRole,
    SpanStatus, TaskTag,
};
use crate::taskqueue::{Outcome, QueueError, TaskQueue, Transport};
use crate::vernac::CommandAst;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOCUMENT: i32 = 1;
pub const EXIT_PROOF: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Longest time a compilation waits for its workers.
const PROOF_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Clone)]
pub struct CompileOptions {
    /// Proof workers; 0 runs proofs in-process.
    pub workers: usize,
    pub search: SearchPath,
    pub transport: Transport,
    /// Artificial delay before each delegated proof.
    pub proof_delay_ms: u64,
    /// Where to write the result; next to the source by default.
    pub output: Option<PathBuf>,
}

impl fmt::Debug for CompileOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompileOptions")
            .field("workers", &self.workers)
            .field("search", &self.search)
            .field("transport", &self.transport)
            .finish()
    }
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            workers: 0,
            search: SearchPath::default(),
            transport: Transport::thread(ProverWorker::new),
            proof_delay_ms: 0,
            output: None,
        }
    }
}

impl CompileOptions {
    pub fn workers(workers: usize) -> CompileOptions {
        CompileOptions { workers, ..CompileOptions::default() }
    }
}

/// An error located in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: SpanId,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {} error(s)", path.display(), diagnostics.len())]
    Document { path: PathBuf, diagnostics: Vec<Diagnostic> },
    #[error("{}: compiled from a different version of {}", path.display(), source_path.display())]
    Stale { path: PathBuf, source_path: PathBuf },
    #[error("task queue: {0}")]
    Queue(#[from] QueueError),
}

impl CompileError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CompileError::Document { .. } | CompileError::Stale { .. } => EXIT_DOCUMENT,
            CompileError::Io { .. } | CompileError::Format { .. } | CompileError::Queue(_) => EXIT_IO,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    /// Reading, parsing and every master state.
    pub master: Duration,
    /// Waiting for proofs, or dumping them.
    pub proofs: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct Compiled<T> {
    pub output: PathBuf,
    pub file: T,
    /// Theorems whose proofs failed, with the reason.
    pub failures: Vec<(String, String)>,
    pub timings: Timings,
}

impl<T> Compiled<T> {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_PROOF
        }
    }
}

fn read_source(path: &Path) -> Result<String, CompileError> {
    std::fs::read_to_string(path).map_err(|source| CompileError::Io { path: path.into(), source })
}

/// The module a source file defines: its file stem.
pub fn module_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for c in text.chars().take(offset) {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Errors outside proof branches, one per offending span. Failures that
/// only propagate from an earlier span are not repeated.
pub fn document_errors(session: &Session, text: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (span, role) in &session.dag().spans {
        let origin = match role {
            SpanRole::Failed { .. } | SpanRole::Query { .. } => true,
            SpanRole::Master { node } | SpanRole::Twin { twin: node, .. } => {
                matches!(session.memoized(*node), Some(Err(f)) if session.dag().span_of(f.origin) == Some(*span))
            }
            SpanRole::Branch { .. } => false,
        };
        if !origin {
            continue;
        }
        if let Some(SpanStatus::Failed { message, range }) = session.compute_status(*span) {
            let (line, column) = line_col(text, range.0);
            out.push(Diagnostic { span: *span, line, column, message });
        }
    }
    out
}

/// Names the document itself defines on master.
fn own_names(session: &Session) -> HashSet<String> {
    let mut names = HashSet::new();
    for (span, role) in &session.dag().spans {
        if !matches!(role, SpanRole::Master { .. } | SpanRole::Twin { .. }) {
            continue;
        }
        if let Some(
            CommandAst::Definition { name, .. } | CommandAst::Axiom { name, .. } | CommandAst::Theorem { name, .. },
        ) = session.command(*span)
        {
            names.insert(name.clone());
        }
    }
    names
}

fn requires(session: &Session) -> Vec<String> {
    session
        .dag()
        .spans
        .iter()
        .filter_map(|(span, _)| match session.command(*span) {
            Some(CommandAst::Require(m)) => Some(m.clone()),
            _ => None,
        })
        .collect()
}

fn file_environment(env: &Environment, own: &HashSet<String>) -> Vec<FileEntry> {
    env.entries()
        .map(|e| {
            let entry = match e {
                EnvEntry::Definition { name, params, body } => {
                    ModuleEntry::Definition { name: name.clone(), params: params.clone(), body: body.clone() }
                }
                EnvEntry::Axiom { name, statement } => {
                    ModuleEntry::Axiom { name: name.clone(), statement: statement.clone() }
                }
                EnvEntry::Opaque { name, statement, .. } => {
                    ModuleEntry::Theorem { name: name.clone(), statement: statement.clone() }
                }
            };
            FileEntry { imported: !own.contains(entry.name()), entry }
        })
        .collect()
}

/// Parses and computes every master state; runs queries in place.
fn check_document(
    module: &str,
    text: &str,
    mode: ProofMode,
    opts: &CompileOptions,
    path: &Path,
) -> Result<Session, CompileError> {
    let loader: Arc<dyn ModuleLoader> = Arc::new(opts.search.clone());
    let mut session = Session::new(SessionConfig { loader, mode, proof_delay_ms: opts.proof_delay_ms });
    session.update_text(text);
    let _ = session.compute_master();
    session.run_queries_here();
    let diagnostics = document_errors(&session, text);
    if !diagnostics.is_empty() {
        return Err(CompileError::Document { path: path.into(), diagnostics });
    }
    let _ = module;
    Ok(session)
}

fn proof_mode(opts: &CompileOptions) -> Result<ProofMode, CompileError> {
    if opts.workers == 0 {
        return Ok(ProofMode::Local);
    }
    Ok(ProofMode::Queue(TaskQueue::new(opts.workers as i64, opts.transport.clone())?))
}

/// Checks `text` completely, proofs included.
pub fn check_full(
    module: &str,
    text: &str,
    opts: &CompileOptions,
    path: &Path,
) -> Result<Compiled<VoFile>, CompileError> {
    let start = Instant::now();
    let mut session = check_document(module, text, proof_mode(opts)?, opts, path)?;
    let master = start.elapsed();
    session.run(&[]);
    session.wait_idle(PROOF_TIMEOUT);
    let Some(Ok(state)) = session.final_state().cloned() else { unreachable!("document errors are reported before") };
    let own = own_names(&session);
    let env = session.environment().expect("master is computed");
    let mut proofs = Vec::new();
    let mut failures = Vec::new();
    for e in env.entries() {
        let EnvEntry::Opaque { name, promise, .. } = e else { continue };
        if !own.contains(name) {
            continue;
        }
        let outcome = match &promise.status {
            PromiseStatus::Finished(t) => ProofOutcome::Term(t.clone()),
            PromiseStatus::Failed(m) => ProofOutcome::Failed(m.clone()),
            PromiseStatus::Delegated { .. } => ProofOutcome::Failed("the proof was not run".into()),
        };
        if let ProofOutcome::Failed(m) = &outcome {
            failures.push((name.clone(), m.clone()));
        }
        proofs.push(ProofRecord { name: name.clone(), outcome });
    }
    let swf = failures.is_empty() && session.check_swf().is_ok();
    let file = VoFile {
        header: Header {
            magic: VO_MAGIC.into(),
            version: FORMAT_VERSION,
            module: module.into(),
            source_digest: Digest::of_bytes(text.as_bytes()),
            requires: requires(&session),
        },
        environment: file_environment(&state.env, &own),
        proofs,
        swf,
    };
    let total = start.elapsed();
    Ok(Compiled { output: PathBuf::new(), file, failures, timings: Timings { master, proofs: total - master, total } })
}

/// Checks `text` without running proofs, keeping their requests.
pub fn check_quick(
    module: &str,
    text: &str,
    opts: &CompileOptions,
    path: &Path,
) -> Result<Compiled<VioFile>, CompileError> {
    let start = Instant::now();
    let mode = ProofMode::Queue(TaskQueue::new(0, opts.transport.clone())?);
    let mut session = check_document(module, text, mode, opts, path)?;
    let master = start.elapsed();
    session.run(&[]);
    let requests = session.dump();
    let Some(Ok(state)) = session.final_state().cloned() else { unreachable!("document errors are reported before") };
    let own = own_names(&session);
    let mut pending = Vec::new();
    for request in requests {
        let ProverRequest::Proof { theorem_span, .. } = &request else { continue };
        let Some(p) = session.dag().proofs.iter().find(|p| p.theorem_span == *theorem_span) else { continue };
        pending.push(PendingProof { name: p.name.clone(), request });
    }
    let file = VioFile {
        header: Header {
            magic: VIO_MAGIC.into(),
            version: FORMAT_VERSION,
            module: module.into(),
            source_digest: Digest::of_bytes(text.as_bytes()),
            requires: requires(&session),
        },
        environment: file_environment(&state.env, &own),
        spans: session
            .spans()
            .iter()
            .map(|s| SpanRecord { id: s.id, offset: s.offset, length: s.len_chars() })
            .collect(),
        pending,
    };
    let total = start.elapsed();
    Ok(Compiled {
        output: PathBuf::new(),
        file,
        failures: Vec::new(),
        timings: Timings { master, proofs: total - master, total },
    })
}

fn output_path(path: &Path, opts: &CompileOptions, ext: &str) -> PathBuf {
    opts.output.clone().unwrap_or_else(|| path.with_extension(ext))
}

/// `.v` to `.vo`. The file is written even when proofs fail, without the
/// SWF flag.
pub fn compile_full(path: &Path, opts: &CompileOptions) -> Result<Compiled<VoFile>, CompileError> {
    let text = read_source(path)?;
    let mut out = check_full(&module_name(path), &text, opts, path)?;
    out.output = output_path(path, opts, "vo");
    out.file.write(&out.output).map_err(|source| CompileError::Format { path: out.output.clone(), source })?;
    Ok(out)
}

/// `.v` to `.vio`: statements are checked, proofs are only recorded.
pub fn compile_quick(path: &Path, opts: &CompileOptions) -> Result<Compiled<VioFile>, CompileError> {
    let text = read_source(path)?;
    let mut out = check_quick(&module_name(path), &text, opts, path)?;
    out.output = output_path(path, opts, "vio");
    out.file.write(&out.output).map_err(|source| CompileError::Format { path: out.output.clone(), source })?;
    Ok(out)
}

/// Runs the pending proofs of a `.vio` file.
pub fn complete(vio: &VioFile, opts: &CompileOptions) -> Result<VoFile, CompileError> {
    let n = vio.pending.len();
    let mut results: Vec<Option<Outcome<ProverResponse>>> = vec![None; n];
    if opts.workers == 0 || n == 0 {
        let mut worker = ProverWorker::new();
        for (i, p) in vio.pending.iter().enumerate() {
            results[i] = Some(match worker.run(p.request.clone()) {
                Ok(r) => Outcome::Finished(r),
                Err(e) => Outcome::Failed(e),
            });
        }
    } else {
        let queue: TaskQueue<ProverTask> = TaskQueue::new(opts.workers as i64, opts.transport.clone())?;
        let (tx, rx) = channel();
        for (i, p) in vio.pending.iter().enumerate() {
            let tag = TaskTag::Proof {
                key: ExtrudedKey(i as u64),
                generation: 0,
                spans: Vec::new(),
                theorem_span: SpanId::NONE,
            };
            match ProverTask::from_request(p.request.clone(), tag, tx.clone()) {
                Some(task) => {
                    queue.enqueue(task, 0, CancelSwitch::new());
                }
                None => {
                    results[i] = Some(Outcome::Failed(crate::taskqueue::ErrorReport::infrastructure(
                        "stored request has no base state",
                    )))
                }
            }
        }
        drop(tx);
        while results.iter().any(Option::is_none) {
            let Ok(report) = rx.recv_timeout(PROOF_TIMEOUT) else { break };
            if let TaskTag::Proof { key, .. } = report.tag {
                results[key.0 as usize] = Some(report.outcome);
            }
        }
    }
    let mut proofs = Vec::new();
    for (p, r) in vio.pending.iter().zip(results) {
        let outcome = match r {
            Some(Outcome::Finished(ProverResponse::Proof(t))) => ProofOutcome::Term(t),
            Some(Outcome::Finished(other)) => ProofOutcome::Failed(format!("unexpected answer {other:?}")),
            Some(Outcome::Failed(e)) => ProofOutcome::Failed(match e.kind {
                crate::taskqueue::ErrorKind::Logic => e.message,
                crate::taskqueue::ErrorKind::Infrastructure => format!("worker failure: {}", e.message),
            }),
            Some(Outcome::Cancelled) | None => ProofOutcome::Failed("the proof was not run".into()),
        };
        proofs.push(ProofRecord { name: p.name.clone(), outcome });
    }
    // records follow the environment's order of own theorems
    let order: Vec<&str> = vio
        .environment
        .iter()
        .filter(|e| !e.imported && matches!(e.entry, ModuleEntry::Theorem { .. }))
        .map(|e| e.entry.name())
        .collect();
    proofs.sort_by_key(|r| order.iter().position(|n| *n == r.name));
    let swf = proofs.iter().all(|r| matches!(r.outcome, ProofOutcome::Term(_))) && swf_holds(&vio.environment, &proofs);
    Ok(VoFile {
        header: Header { magic: VO_MAGIC.into(), ..vio.header.clone() },
        environment: vio.environment.clone(),
        proofs,
        swf,
    })
}

/// Rebuilds the environment with the given evidence and checks it.
fn swf_holds(environment: &[FileEntry], proofs: &[ProofRecord]) -> bool {
    let mut env = Environment::new();
    let mut imported = HashSet::new();
    for (i, e) in environment.iter().enumerate() {
        let next = match &e.entry {
            ModuleEntry::Definition { name, params, body } => env.add_definition(name, params.clone(), body.clone()),
            ModuleEntry::Axiom { name, statement } => env.add_axiom(name, statement.clone()),
            ModuleEntry::Theorem { name, statement } => {
                let promise = match proofs.iter().find(|p| &p.name == name).map(|p| &p.outcome) {
                    _ if e.imported => {
                        imported.insert(name.clone());
                        ProofPromise::delegated(statement.clone(), ExtrudedKey(i as u64), crate::ids::StateId::INITIAL)
                    }
                    Some(ProofOutcome::Term(t)) => ProofPromise::finished(statement.clone(), t.clone()),
                    Some(ProofOutcome::Failed(m)) => ProofPromise::failed(statement.clone(), m.clone()),
                    None => ProofPromise::failed(statement.clone(), "no evidence"),
                };
                env.add_opaque(name, statement.clone(), promise)
            }
        };
        match next {
            Ok(n) => env = n,
            Err(_) => return false,
        }
    }
    check_swf_with(&env, &mut |name: &str, promise: &ProofPromise| match &promise.status {
        _ if imported.contains(name) => Forced::Skip,
        PromiseStatus::Finished(t) => Forced::Term(t.clone()),
        PromiseStatus::Failed(m) => Forced::Failed(m.clone()),
        PromiseStatus::Delegated { .. } => Forced::Failed("unresolved".into()),
    })
    .is_ok()
}

/// `.vio` to `.vo`. The source next to the `.vio`, when present, has to be
/// the one it was compiled from.
pub fn vio2vo(path: &Path, opts: &CompileOptions) -> Result<Compiled<VoFile>, CompileError> {
    let start = Instant::now();
    let vio = VioFile::read(path).map_err(|source| match source {
        FormatError::Io(source) => CompileError::Io { path: path.into(), source },
        source => CompileError::Format { path: path.into(), source },
    })?;
    let source_path = path.with_extension("v");
    if let Ok(text) = std::fs::read_to_string(&source_path) {
        if Digest::of_bytes(text.as_bytes()) != vio.header.source_digest {
            return Err(CompileError::Stale { path: path.into(), source_path });
        }
    }
    let master = start.elapsed();
    let file = complete(&vio, opts)?;
    let failures = file
        .proofs
        .iter()
        .filter_map(|p| match &p.outcome {
            ProofOutcome::Failed(m) => Some((p.name.clone(), m.clone())),
            ProofOutcome::Term(_) => None,
        })
        .collect();
    let output = output_path(path, opts, "vo");
    file.write(&output).map_err(|source| CompileError::Format { path: output.clone(), source })?;
    let total = start.elapsed();
    Ok(Compiled { output, file, failures, timings: Timings { master, proofs: total - master, total } })
}
