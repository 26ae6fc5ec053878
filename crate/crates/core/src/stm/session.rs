//! A document session: owns the DAG, memoizes states, schedules work
//! against a perspective and collects feedback.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dag::{build_dag, Dag, Edge, Input, ProofBranch, SpanRole};
use super::exec::{admit, execute, run_query, run_steps, ModuleLoader, NoModules, Side};
use super::state::{BranchError, Computation, KeyTable, PureComputation, SystemState};
use super::tasks::{ProverResponse, ProverTask, ProverWorker, TaskKind, TaskReport, TaskTag};
use crate::cancel::CancelSwitch;
use crate::digest::Digest;
use crate::engine::{EngineError, TacticAst};
use crate::ids::{ExtrudedKey, SpanId, StateId};
use crate::kernel::{check_swf_with, EnvEntry, Environment, Forced, KernelError, PromiseStatus, ProofPromise, Term};
use crate::taskqueue::{ErrorKind, Outcome, TaskQueue};
use crate::vernac::{chop, classify, parse, Classification, CommandAst, ParseError, Parsed, Span};

/// Where proofs go once their `Qed` has been executed.
pub enum ProofMode {
    /// Forced in-process, after the master work of a plan.
    Local,
    /// Sent to a task queue.
    Queue(TaskQueue<ProverTask>),
    /// Left pending.
    Defer,
}

impl std::fmt::Debug for ProofMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProofMode::Local => write!(f, "Local"),
            ProofMode::Queue(q) => write!(f, "Queue({} workers)", q.max_workers()),
            ProofMode::Defer => write!(f, "Defer"),
        }
    }
}

pub struct SessionConfig {
    pub loader: Arc<dyn ModuleLoader>,
    pub mode: ProofMode,
    /// Added before each delegated proof runs.
    pub proof_delay_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { loader: Arc::new(NoModules), mode: ProofMode::Local, proof_delay_ms: 0 }
    }
}

/// Why a node has no state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    /// The node whose transaction failed.
    pub origin: StateId,
    pub message: String,
}

pub type NodeResult = Result<Arc<SystemState>, Failure>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SpanStatus {
    Processing,
    Processed,
    Failed { message: String, range: (usize, usize) },
}

impl SpanStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, SpanStatus::Processing)
    }
}

/// A name occurrence and what it refers to. Ranges are document characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperlink {
    pub range: (usize, usize),
    pub target_span: Option<SpanId>,
    pub target_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEvent {
    Status { span: SpanId, status: SpanStatus },
    Goals { span: SpanId, text: String },
    Markup { span: SpanId, links: Vec<Hyperlink> },
    QueryResult { span: SpanId, result: Result<String, String> },
    PromiseResolved { name: String, key: ExtrudedKey, ok: bool },
}

#[derive(Debug, Clone)]
pub struct Logged {
    pub at: Instant,
    pub event: SessionEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateReport {
    /// Spans whose feedback has to be produced again.
    pub invalidated: BTreeSet<SpanId>,
    /// Promises kept across the edit.
    pub reused: Vec<ExtrudedKey>,
    /// Promises whose computation was replaced.
    pub replaced: Vec<ExtrudedKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForceError {
    #[error("no promise behind key {0}")]
    UnknownKey(ExtrudedKey),
    #[error("the proof belongs to another compilation unit")]
    Imported,
    #[error("cancelled")]
    Cancelled,
    #[error("{}", .0.message)]
    Failed(BranchError),
}

#[derive(Debug, Clone)]
enum Work {
    Master(StateId),
    BranchNode(StateId),
    Query(SpanId),
    Proof { qed: StateId, priority: i64 },
}

pub struct Session {
    loader: Arc<dyn ModuleLoader>,
    mode: ProofMode,
    proof_delay_ms: u64,
    spans: Vec<Span>,
    parsed: Vec<Result<Parsed, ParseError>>,
    dag: Dag,
    memo: HashMap<StateId, NodeResult>,
    keys: KeyTable,
    qed_keys: HashMap<StateId, ExtrudedKey>,
    ids_by_fp: HashMap<Digest, StateId>,
    last_state: u64,
    last_span: i64,
    executed: u64,
    trace: Vec<(StateId, StateId)>,
    current: StateId,
    definers: HashMap<String, Vec<(usize, SpanId)>>,
    status: HashMap<SpanId, SpanStatus>,
    goals_sent: HashMap<SpanId, String>,
    query_results: HashMap<SpanId, Result<String, String>>,
    events: Vec<Logged>,
    work: VecDeque<Work>,
    reply_tx: Sender<TaskReport>,
    reply_rx: Receiver<TaskReport>,
    /// Proof tasks in the queue, by key, at the generation they were made for.
    in_flight: HashMap<ExtrudedKey, u64>,
    queries_in_flight: HashSet<SpanId>,
    par_batch: u64,
    par_inbox: Vec<TaskReport>,
}

impl Default for Session {
    fn default() -> Self {
        Session::new(SessionConfig::default())
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Session {
        let keys = KeyTable::new();
        let initial = SystemState { extruded: keys.clone(), ..SystemState::default() };
        let (reply_tx, reply_rx) = channel();
        let mut dag = Dag::default();
        dag.nodes.insert(StateId::INITIAL);
        Session {
            loader: config.loader,
            mode: config.mode,
            proof_delay_ms: config.proof_delay_ms,
            spans: Vec::new(),
            parsed: Vec::new(),
            dag,
            memo: HashMap::from([(StateId::INITIAL, Ok(Arc::new(initial)))]),
            keys,
            qed_keys: HashMap::new(),
            ids_by_fp: HashMap::new(),
            last_state: 0,
            last_span: -1,
            executed: 0,
            trace: Vec::new(),
            current: StateId::INITIAL,
            definers: HashMap::new(),
            status: HashMap::new(),
            goals_sent: HashMap::new(),
            query_results: HashMap::new(),
            events: Vec::new(),
            work: VecDeque::new(),
            reply_tx,
            reply_rx,
            in_flight: HashMap::new(),
            queries_in_flight: HashSet::new(),
            par_batch: 0,
            par_inbox: Vec::new(),
        }
    }

    /// A session over `text` with proofs forced locally.
    pub fn with_text(text: &str) -> Session {
        let mut s = Session::default();
        s.update_text(text);
        s
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn keys(&self) -> &KeyTable {
        &self.keys
    }

    pub fn mode(&self) -> &ProofMode {
        &self.mode
    }

    /// Number of transactions executed so far, proof programs included.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Executed labeled edges, in order.
    pub fn trace(&self) -> &[(StateId, StateId)] {
        &self.trace
    }

    /// The state most recently installed.
    pub fn current(&self) -> StateId {
        self.current
    }

    /// The parsed command of `span`.
    pub fn command(&self, span: SpanId) -> Option<&CommandAst> {
        let i = self.index_of(span)?;
        self.parsed[i].as_ref().ok().map(|p| &p.ast)
    }

    pub fn memoized(&self, node: StateId) -> Option<&NodeResult> {
        self.memo.get(&node)
    }

    pub fn qed_key(&self, qed: StateId) -> Option<ExtrudedKey> {
        self.qed_keys.get(&qed).copied()
    }

    pub fn status(&self, span: SpanId) -> Option<&SpanStatus> {
        self.status.get(&span)
    }

    pub fn drain_events(&mut self) -> Vec<Logged> {
        std::mem::take(&mut self.events)
    }

    pub fn events(&self) -> &[Logged] {
        &self.events
    }

    /// Proof tasks sent to the queue and not yet answered.
    pub fn proofs_in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Proofs and queries sent to workers and not yet answered.
    pub fn tasks_in_flight(&self) -> usize {
        self.in_flight.len() + self.queries_in_flight.len()
    }

    fn emit(&mut self, event: SessionEvent) {
        self.events.push(Logged { at: Instant::now(), event });
    }

    fn fresh_span(&mut self) -> SpanId {
        self.last_span += 1;
        SpanId(self.last_span)
    }

    /// Replaces the document. Spans of the unchanged prefix keep their ids;
    /// every later span is new.
    pub fn update_text(&mut self, text: &str) -> UpdateReport {
        let chopped = chop(text);
        let keep = self
            .spans
            .iter()
            .zip(&chopped)
            .take_while(|(a, b)| a.text == b.text && a.offset == b.offset && a.unparsable == b.unparsable)
            .count();
        let mut spans = Vec::with_capacity(chopped.len());
        for (i, mut s) in chopped.into_iter().enumerate() {
            s.id = if i < keep { self.spans[i].id } else { self.fresh_span() };
            spans.push(s);
        }
        self.set_spans(spans)
    }

    /// Replaces the document with spans whose ids the caller chose.
    pub fn set_spans(&mut self, spans: Vec<Span>) -> UpdateReport {
        if let Some(max) = spans.iter().map(|s| s.id.0).max() {
            self.last_span = self.last_span.max(max);
        }
        let old_ids: HashSet<SpanId> = self.spans.iter().map(|s| s.id).collect();
        let parsed: Vec<Result<Parsed, ParseError>> = spans.iter().map(parse).collect();
        let inputs: Vec<Input<'_>> = spans
            .iter()
            .zip(&parsed)
            .map(|(span, p)| Input { span, parsed: p.as_ref().map(|p| &p.ast).map_err(|e| e.to_string()) })
            .collect();
        let mut ids = std::mem::take(&mut self.ids_by_fp);
        let mut last = self.last_state;
        let mut dag = build_dag(&inputs, &mut |fp| {
            *ids.entry(*fp).or_insert_with(|| {
                last += 1;
                StateId(last)
            })
        });
        drop(inputs);
        self.last_state = last;
        ids.retain(|_, id| dag.nodes.contains(id));
        self.ids_by_fp = ids;

        // a branch with unchanged text keeps the switch its tasks listen to
        for p in &mut dag.proofs {
            if let Some(old) = self.dag.proofs.iter().find(|o| o.fingerprint == p.fingerprint) {
                p.cancel = old.cancel.clone();
            }
        }
        let old_dag = std::mem::replace(&mut self.dag, dag);
        for p in &old_dag.proofs {
            if !self.dag.proofs.iter().any(|n| n.fingerprint == p.fingerprint) {
                p.cancel.cancel();
            }
        }

        let nodes = &self.dag.nodes;
        self.memo.retain(|id, _| nodes.contains(id));
        self.keys.prune(|owner| nodes.contains(&owner));
        self.qed_keys.retain(|id, _| nodes.contains(id));
        if !nodes.contains(&self.current) {
            self.current = StateId::INITIAL;
        }

        let mut report = UpdateReport::default();
        for p in &self.dag.proofs {
            let Some(key) = p.qed.and_then(|q| self.qed_keys.get(&q).copied()) else { continue };
            let Some(slot) = self.keys.lookup(key) else { continue };
            let Computation::Pure(c) = &slot.computation else { continue };
            if c.fingerprint == p.fingerprint {
                self.keys.rebind(key, &p.program, p.theorem_span);
                report.reused.push(key);
            } else {
                self.keys.replace(key, Computation::Pure(computation_for(p, c.produces.clone())));
                report.replaced.push(key);
                report.invalidated.extend(p.spans.iter().copied());
                report.invalidated.insert(p.theorem_span);
                report.invalidated.extend(p.qed_span);
            }
        }
        let keys = &self.keys;
        self.in_flight.retain(|key, generation| keys.lookup(*key).is_some_and(|s| s.generation == *generation));

        self.spans = spans;
        self.parsed = parsed;
        for s in &self.spans {
            if !old_ids.contains(&s.id) {
                report.invalidated.insert(s.id);
            }
        }
        let present: HashSet<SpanId> = self.spans.iter().map(|s| s.id).collect();
        let invalid = &report.invalidated;
        let keep = |s: &SpanId| present.contains(s) && !invalid.contains(s);
        self.status.retain(|s, _| keep(s));
        self.goals_sent.retain(|s, _| keep(s));
        self.query_results.retain(|s, _| keep(s));
        self.queries_in_flight.retain(|s| present.contains(s));

        self.definers.clear();
        for (i, (span, p)) in self.spans.iter().zip(&self.parsed).enumerate() {
            if let Ok(Parsed {
                ast:
                    CommandAst::Definition { name, .. } | CommandAst::Axiom { name, .. } | CommandAst::Theorem { name, .. },
                ..
            }) = p
            {
                self.definers.entry(name.clone()).or_default().push((i, span.id));
            }
        }
        self.work.clear();
        self.refresh_all();
        report
    }

    /// Computes the state of `target`, executing only labeled edges whose
    /// results are not memoized.
    pub fn compute_state(&mut self, target: StateId) -> NodeResult {
        if let Some(r) = self.memo.get(&target) {
            return r.clone();
        }
        if !self.dag.nodes.contains(&target) {
            return Err(Failure { origin: target, message: format!("no state {target} in the document") });
        }
        let path: Vec<Edge> = self.dag.path_to(target).into_iter().cloned().collect();
        let start = path.iter().rposition(|e| self.memo.contains_key(&e.to)).map_or(0, |i| i + 1);
        let mut result = self.memo.get(&path.get(start).map_or(target, |e| e.from)).cloned();
        for e in &path[start..] {
            let prev = self.memo.get(&e.from).cloned().expect("path starts at a memoized node");
            let r = match prev {
                Err(f) => Err(f),
                Ok(state) => self.exec_edge(e, &state),
            };
            self.memo.insert(e.to, r.clone());
            self.after_node(e.to);
            result = Some(r);
        }
        result.unwrap_or_else(|| Err(Failure { origin: target, message: "unreachable state".into() }))
    }

    fn exec_edge(&mut self, e: &Edge, state: &Arc<SystemState>) -> NodeResult {
        self.executed += 1;
        self.trace.push((e.from, e.to));
        self.current = e.to;
        let span = e.tx.span.expect("labeled edges carry a span");
        self.mark_processing(span);
        let cmd = e.tx.label.as_ref().expect("only labeled edges are executed");
        let side = if self.dag.branch_nodes.contains(&e.to) { Side::Branch } else { Side::Master };
        let result = match cmd {
            CommandAst::Qed => self.exec_qed(e.to, state),
            CommandAst::Tactic(TacticAst::Par(inner)) if side == Side::Branch && self.delegates_par() => {
                self.exec_par(state, inner)
            }
            _ => execute(state, cmd, side, self.loader.as_ref(), e.to),
        };
        self.emit_markup(span, state);
        result.map(Arc::new).map_err(|message| Failure { origin: e.to, message })
    }

    fn exec_qed(&mut self, node: StateId, state: &SystemState) -> Result<SystemState, String> {
        let branch = self.dag.branch_of_qed(node).ok_or("internal: Qed without branch")?;
        let produces = state.proof.as_ref().ok_or("no proof to close")?.statement.clone();
        let next = admit(state, node, branch.root, Computation::Pure(computation_for(branch, produces)))?;
        if let Some(EnvEntry::Opaque {
            promise: ProofPromise { status: PromiseStatus::Delegated { key, .. }, .. },
            ..
        }) = next.env.entries().last()
        {
            self.qed_keys.insert(node, *key);
        }
        Ok(next)
    }

    fn delegates_par(&self) -> bool {
        matches!(&self.mode, ProofMode::Queue(q) if q.max_workers() > 0)
    }

    /// Sends each goal of a `par:` tactic to the queue and joins the answers.
    fn exec_par(&mut self, state: &Arc<SystemState>, inner: &TacticAst) -> Result<SystemState, String> {
        let proof = state.proof.as_ref().ok_or("no proof in progress")?;
        let pieces = proof.ps.par_split(inner);
        if pieces.is_empty() {
            return Err(EngineError::NoGoals.to_string());
        }
        self.par_batch += 1;
        let batch = self.par_batch;
        let ProofMode::Queue(queue) = &self.mode else { unreachable!("checked by delegates_par") };
        for (index, (goal, tactic)) in pieces.iter().cloned().enumerate() {
            let task = ProverTask::new(
                TaskKind::Par { goal, tactic },
                state.clone(),
                TaskTag::Par { batch, index },
                self.reply_tx.clone(),
            );
            queue.enqueue(task, i64::MAX, CancelSwitch::new());
        }
        let mut witnesses: Vec<Option<Result<Term, String>>> = vec![None; pieces.len()];
        while witnesses.iter().any(Option::is_none) {
            let report = self.reply_rx.recv().map_err(|_| "the task queue went away".to_string())?;
            match report.tag {
                TaskTag::Par { batch: b, index } if b == batch => {
                    witnesses[index] = Some(match report.outcome {
                        Outcome::Finished(ProverResponse::Par(t)) => Ok(t),
                        Outcome::Finished(other) => Err(format!("unexpected answer {other:?}")),
                        Outcome::Failed(e) => Err(e.message),
                        Outcome::Cancelled => Err("cancelled".into()),
                    });
                }
                _ => self.par_inbox.push(report),
            }
        }
        let mut terms = Vec::with_capacity(witnesses.len());
        for (index, w) in witnesses.into_iter().enumerate() {
            match w.expect("all answered") {
                Ok(t) => terms.push(t),
                Err(reason) => return Err(EngineError::ParGoal { index, reason }.to_string()),
            }
        }
        let mut next = (**state).clone();
        let proof = next.proof.as_mut().expect("checked above");
        proof.ps.par_join(terms).map_err(|e| e.to_string())?;
        Ok(next)
    }

    fn emit_markup(&mut self, span: SpanId, state: &SystemState) {
        let Some(idx) = self.index_of(span) else { return };
        let Ok(parsed) = &self.parsed[idx] else { return };
        let offset = self.spans[idx].offset;
        let mut links = Vec::new();
        for r in &parsed.refs {
            let target =
                self.definers.get(&r.name).and_then(|defs| defs.iter().rev().find(|(i, _)| *i < idx).map(|(_, s)| *s));
            if target.is_some() || state.env.contains(&r.name) {
                links.push(Hyperlink {
                    range: (offset + r.start, offset + r.end),
                    target_span: target,
                    target_name: r.name.clone(),
                });
            }
        }
        if !links.is_empty() {
            self.emit(SessionEvent::Markup { span, links });
        }
    }

    fn index_of(&self, span: SpanId) -> Option<usize> {
        self.spans.iter().position(|s| s.id == span)
    }

    /// Feedback once `node` has a result.
    fn after_node(&mut self, node: StateId) {
        let Some(span) = self.dag.span_of(node) else { return };
        self.refresh(span);
        let shows_goals = self.dag.branch_nodes.contains(&node)
            || matches!(self.dag.role(span), Some(SpanRole::Master { node: n }) if *n == node);
        if !shows_goals {
            return;
        }
        let text = match self.memo.get(&node) {
            Some(Ok(s)) => s.proof.as_ref().map(|p| p.ps.render_goals()),
            _ => None,
        };
        if let Some(text) = text {
            if self.goals_sent.get(&span) != Some(&text) {
                self.goals_sent.insert(span, text.clone());
                self.emit(SessionEvent::Goals { span, text });
            }
        }
    }

    fn mark_processing(&mut self, span: SpanId) {
        if !self.status.contains_key(&span) && self.index_of(span).is_some() {
            self.status.insert(span, SpanStatus::Processing);
            self.emit(SessionEvent::Status { span, status: SpanStatus::Processing });
        }
    }

    /// Emits the status of `span` if it became known or changed.
    fn refresh(&mut self, span: SpanId) {
        let Some(new) = self.compute_status(span) else { return };
        match self.status.get(&span) {
            Some(old) if old.is_terminal() || *old == new => return,
            _ => {}
        }
        self.status.insert(span, new.clone());
        self.emit(SessionEvent::Status { span, status: new });
    }

    fn refresh_all(&mut self) {
        let ids: Vec<SpanId> = self.spans.iter().map(|s| s.id).collect();
        for s in ids {
            self.refresh(s);
        }
    }

    fn refresh_branch(&mut self, p: usize) {
        let proof = &self.dag.proofs[p];
        let mut spans = vec![proof.theorem_span];
        spans.extend(proof.spans.iter().copied());
        spans.extend(proof.qed_span);
        for s in spans {
            self.refresh(s);
        }
    }

    fn range_of(&self, span: SpanId) -> (usize, usize) {
        let Some(i) = self.index_of(span) else { return (0, 0) };
        let s = &self.spans[i];
        match &self.parsed[i] {
            Err(e) => ((s.offset + e.position).min(s.end()), s.end()),
            Ok(_) => (s.offset, s.end()),
        }
    }

    fn failed(&self, span: SpanId, message: impl Into<String>) -> SpanStatus {
        SpanStatus::Failed { message: message.into(), range: self.range_of(span) }
    }

    /// The status `span` has now, `None` while unknown or skipped.
    pub fn compute_status(&self, span: SpanId) -> Option<SpanStatus> {
        match self.dag.role(span)? {
            SpanRole::Failed { message, .. } => Some(self.failed(span, message.clone())),
            SpanRole::Master { node } => {
                let st = self.node_status(*node, span)?;
                if st == SpanStatus::Processed {
                    if let Some(p) = self.dag.proofs.iter().position(|p| p.theorem_span == span) {
                        if let Some(Err(e)) = self.branch_result(p) {
                            if e.span == span {
                                return Some(self.failed(span, e.message));
                            }
                        }
                    }
                }
                Some(st)
            }
            SpanRole::Twin { twin, .. } => self.node_status(*twin, span),
            SpanRole::Branch { branch, node } => {
                match self.memo.get(node) {
                    Some(Ok(_)) => return Some(SpanStatus::Processed),
                    Some(Err(f)) if self.dag.span_of(f.origin) == Some(span) => {
                        return Some(self.failed(span, f.message.clone()))
                    }
                    Some(Err(_)) => return None,
                    None => {}
                }
                match self.branch_result(*branch)? {
                    Ok(_) => Some(SpanStatus::Processed),
                    Err(e) if e.span == span => Some(self.failed(span, e.message)),
                    Err(e) => {
                        let spans = &self.dag.proofs[*branch].spans;
                        let at = spans.iter().position(|s| *s == e.span);
                        let me = spans.iter().position(|s| *s == span);
                        match (at, me) {
                            (Some(at), Some(me)) if me < at => Some(SpanStatus::Processed),
                            _ => None,
                        }
                    }
                }
            }
            SpanRole::Query { .. } => match self.query_results.get(&span)? {
                Ok(_) => Some(SpanStatus::Processed),
                Err(m) => Some(self.failed(span, m.clone())),
            },
        }
    }

    fn node_status(&self, node: StateId, span: SpanId) -> Option<SpanStatus> {
        match self.memo.get(&node)? {
            Ok(_) => Some(SpanStatus::Processed),
            Err(f) if self.dag.span_of(f.origin) == Some(span) => Some(self.failed(span, f.message.clone())),
            Err(f) => Some(self.failed(span, format!("not checked: an earlier command failed ({})", f.message))),
        }
    }

    /// The result of proof branch `p`, if its proof has run.
    pub fn branch_result(&self, p: usize) -> Option<Result<Term, BranchError>> {
        let key = self.qed_keys.get(&self.dag.proofs.get(p)?.qed?)?;
        self.keys.lookup(*key)?.result
    }

    /// Runs the computation behind `key` here, saving and restoring the
    /// current state around it. The final state of the run is discarded.
    pub fn future_force(&mut self, key: ExtrudedKey) -> Result<Term, ForceError> {
        let slot = self.keys.lookup(key).ok_or(ForceError::UnknownKey(key))?;
        if let Some(r) = slot.result {
            return r.map_err(ForceError::Failed);
        }
        let result = match slot.computation {
            Computation::Imported { .. } => return Err(ForceError::Imported),
            Computation::Stored { request, .. } => ProverWorker::new()
                .run(*request)
                .and_then(|r| match r {
                    ProverResponse::Proof(t) => Ok(t),
                    other => Err(crate::taskqueue::ErrorReport::infrastructure(format!("unexpected answer {other:?}"))),
                })
                .map_err(|e| BranchError { span: e.span.unwrap_or(SpanId::NONE), message: e.message }),
            Computation::Pure(c) => {
                if c.cancel.is_cancelled() {
                    return Err(ForceError::Cancelled);
                }
                let base = self
                    .compute_state(c.base)
                    .map_err(|f| ForceError::Failed(BranchError { span: c.theorem_span, message: f.message }))?;
                let saved = self.current;
                self.current = c.base;
                // resume after the deepest branch state already computed
                let mut start = base;
                let mut done = 0;
                let mut prev = c.base;
                let mut early = None;
                for (i, step) in c.program.iter().enumerate() {
                    let Some(SpanRole::Branch { node, .. } | SpanRole::Twin { node, .. }) = self.dag.role(step.span)
                    else {
                        break;
                    };
                    match self.memo.get(node) {
                        Some(Ok(st)) => {
                            start = st.clone();
                            done = i + 1;
                            prev = *node;
                        }
                        Some(Err(f)) if f.origin == *node => {
                            early = Some(BranchError { span: step.span, message: f.message.clone() });
                            break;
                        }
                        _ => break,
                    }
                }
                let blame = c.program.last().map_or(c.theorem_span, |s| s.span);
                let rest = &c.program[done..];
                let mut steps = Vec::new();
                let r = match early {
                    Some(e) => Err(e),
                    None => run_steps(&start, rest, &c.produces, blame, |step, _| steps.push(step.span)),
                };
                // the failing step ran too
                if let Err(e) = &r {
                    if rest.iter().any(|s| s.span == e.span) && !steps.contains(&e.span) {
                        steps.push(e.span);
                    }
                }
                for s in steps {
                    self.executed += 1;
                    if let Some(SpanRole::Branch { node, .. } | SpanRole::Twin { node, .. }) = self.dag.role(s) {
                        self.trace.push((prev, *node));
                        prev = *node;
                    }
                }
                self.current = saved;
                if c.cancel.is_cancelled() {
                    return Err(ForceError::Cancelled);
                }
                r
            }
        };
        self.keys.resolve(key, slot.generation, result.clone());
        self.after_resolution(key);
        result.map_err(ForceError::Failed)
    }

    fn after_resolution(&mut self, key: ExtrudedKey) {
        let Some(p) = self.dag.proofs.iter().position(|p| p.qed.and_then(|q| self.qed_keys.get(&q)) == Some(&key))
        else {
            return;
        };
        let ok = matches!(self.branch_result(p), Some(Ok(_)));
        let name = self.dag.proofs[p].name.clone();
        self.emit(SessionEvent::PromiseResolved { name, key, ok });
        self.refresh_branch(p);
    }

    /// Plans work for `perspective`: master states up to the last
    /// perspective span first, then the perspective's branch states and
    /// queries, then proofs closest to the perspective, then the rest.
    pub fn observe(&mut self, perspective: &[SpanId]) {
        let indices: Vec<usize> = perspective.iter().filter_map(|s| self.dag.index_of(*s)).collect();
        let last = indices.iter().copied().max();
        let mut work = VecDeque::new();
        let mut later = Vec::new();
        for (i, (_, role)) in self.dag.spans.iter().enumerate() {
            let node = match role {
                SpanRole::Master { node } => Some(*node),
                SpanRole::Twin { twin, .. } => Some(*twin),
                _ => None,
            };
            if let Some(n) = node {
                if last.is_some_and(|l| i <= l) {
                    work.push_back(Work::Master(n));
                } else {
                    later.push(Work::Master(n));
                }
            }
        }
        for &i in &indices {
            match &self.dag.spans[i].1 {
                SpanRole::Branch { node, .. } | SpanRole::Twin { node, .. } => work.push_back(Work::BranchNode(*node)),
                SpanRole::Query { .. } => work.push_back(Work::Query(self.dag.spans[i].0)),
                _ => {}
            }
        }
        let mut proofs: Vec<(i64, usize, StateId)> = Vec::new();
        for p in &self.dag.proofs {
            let (Some(qed), Some(qed_span)) = (p.qed, p.qed_span) else { continue };
            let (Some(from), Some(to)) = (self.dag.index_of(p.theorem_span), self.dag.index_of(qed_span)) else {
                continue;
            };
            let distance = indices
                .iter()
                .map(|&i| if (from..=to).contains(&i) { 0 } else { (i as i64 - to as i64).abs() })
                .min()
                .unwrap_or(0);
            proofs.push((-distance, to, qed));
        }
        proofs.sort_by_key(|&(priority, at, _)| (std::cmp::Reverse(priority), at));
        let proofs = proofs.into_iter().map(|(priority, _, qed)| Work::Proof { qed, priority });
        if matches!(self.mode, ProofMode::Local) {
            work.extend(later);
            work.extend(proofs);
        } else {
            work.extend(proofs);
            work.extend(later);
        }
        self.work = work;
    }

    /// Does one unit of planned work. Returns `false` once the plan is done.
    pub fn step(&mut self) -> bool {
        let Some(w) = self.work.pop_front() else { return false };
        match w {
            Work::Master(n) | Work::BranchNode(n) => {
                let _ = self.compute_state(n);
            }
            Work::Query(span) => self.run_query_span(span),
            Work::Proof { qed, priority } => self.schedule_proof(qed, priority),
        }
        self.poll();
        true
    }

    pub fn has_work(&self) -> bool {
        !self.work.is_empty()
    }

    /// Observes `perspective` and does the whole plan.
    pub fn run(&mut self, perspective: &[SpanId]) {
        self.observe(perspective);
        while self.step() {}
    }

    /// Every span in document order.
    pub fn all_spans(&self) -> Vec<SpanId> {
        self.spans.iter().map(|s| s.id).collect()
    }

    fn schedule_proof(&mut self, qed: StateId, priority: i64) {
        if self.compute_state(qed).is_err() {
            return;
        }
        let Some(&key) = self.qed_keys.get(&qed) else { return };
        let Some(slot) = self.keys.lookup(key) else { return };
        if slot.result.is_some() {
            return;
        }
        let Computation::Pure(c) = slot.computation else { return };
        match &self.mode {
            ProofMode::Defer => {}
            ProofMode::Local => {
                let _ = self.future_force(key);
            }
            ProofMode::Queue(_) => {
                if self.in_flight.get(&key) == Some(&slot.generation) || c.cancel.is_cancelled() {
                    return;
                }
                let Ok(base) = self.compute_state(c.base) else { return };
                let tag = TaskTag::Proof {
                    key,
                    generation: slot.generation,
                    spans: c.program.iter().map(|s| s.span).collect(),
                    theorem_span: c.theorem_span,
                };
                let kind = TaskKind::Proof {
                    program: c.program.clone(),
                    produces: c.produces.clone(),
                    theorem_span: c.theorem_span,
                    delay_ms: self.proof_delay_ms,
                };
                let task = ProverTask::new(kind, base, tag, self.reply_tx.clone());
                if let ProofMode::Queue(q) = &self.mode {
                    q.enqueue(task, priority, c.cancel.clone());
                }
                self.in_flight.insert(key, slot.generation);
                for step in &c.program {
                    self.mark_processing(step.span);
                }
            }
        }
    }

    fn run_query_span(&mut self, span: SpanId) {
        if self.query_results.contains_key(&span) || self.queries_in_flight.contains(&span) {
            return;
        }
        let Some(SpanRole::Query { anchor, command, .. }) = self.dag.role(span).cloned() else { return };
        self.mark_processing(span);
        let state = match self.compute_state(anchor) {
            Ok(s) => s,
            Err(f) => {
                self.record_query(span, Err(format!("not checked: an earlier command failed ({})", f.message)));
                return;
            }
        };
        self.emit_markup(span, &state);
        match &self.mode {
            ProofMode::Queue(q) if q.max_workers() > 0 => {
                let task = ProverTask::new(
                    TaskKind::Query { span, command },
                    state,
                    TaskTag::Query { span },
                    self.reply_tx.clone(),
                );
                q.enqueue(task, i64::MAX - 1, CancelSwitch::new());
                self.queries_in_flight.insert(span);
            }
            _ => {
                let r = run_query(&state, &command);
                self.record_query(span, r);
            }
        }
    }

    /// Runs every query span in-process, whatever the proof mode.
    pub fn run_queries_here(&mut self) {
        let queries: Vec<SpanId> = self
            .dag
            .spans
            .iter()
            .filter(|(s, r)| matches!(r, SpanRole::Query { .. }) && !self.query_results.contains_key(s))
            .map(|(s, _)| *s)
            .collect();
        for span in queries {
            let Some(SpanRole::Query { anchor, command, .. }) = self.dag.role(span).cloned() else { continue };
            self.mark_processing(span);
            let r = match self.compute_state(anchor) {
                Ok(state) => {
                    self.emit_markup(span, &state);
                    run_query(&state, &command)
                }
                Err(f) => Err(format!("not checked: an earlier command failed ({})", f.message)),
            };
            self.record_query(span, r);
        }
    }

    fn record_query(&mut self, span: SpanId, result: Result<String, String>) {
        if self.index_of(span).is_none() {
            return;
        }
        self.query_results.insert(span, result.clone());
        self.emit(SessionEvent::QueryResult { span, result });
        self.refresh(span);
    }

    /// Runs `text` as a query in the state after `span`, or after the whole
    /// document when `span` is unknown.
    pub fn query_at(&mut self, span: SpanId, text: &str) -> Result<String, String> {
        let parsed = crate::vernac::parse_str(text).map_err(|e| e.to_string())?;
        if classify(&parsed.ast) != Classification::Query {
            return Err(format!("`{}` is not a query", text.trim()));
        }
        let node = match self.dag.role(span) {
            Some(SpanRole::Master { node } | SpanRole::Branch { node, .. } | SpanRole::Twin { node, .. }) => *node,
            Some(SpanRole::Query { anchor, .. }) => *anchor,
            _ => self.dag.master_tip,
        };
        let state = self.compute_state(node).map_err(|f| f.message)?;
        let result = run_query(&state, &parsed.ast);
        self.emit(SessionEvent::QueryResult { span, result: result.clone() });
        result
    }

    /// Takes every answer that has arrived. Returns how many there were.
    pub fn poll(&mut self) -> usize {
        let mut reports: Vec<TaskReport> = std::mem::take(&mut self.par_inbox);
        reports.extend(self.reply_rx.try_iter());
        let n = reports.len();
        for r in reports {
            self.handle_report(r);
        }
        n
    }

    /// Waits up to `timeout` for one answer.
    pub fn poll_timeout(&mut self, timeout: Duration) -> usize {
        if !self.par_inbox.is_empty() {
            return self.poll();
        }
        match self.reply_rx.recv_timeout(timeout) {
            Ok(r) => {
                self.handle_report(r);
                1 + self.poll()
            }
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => 0,
        }
    }

    /// Waits until no proof or query task is outstanding.
    pub fn wait_idle(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            self.poll();
            if self.in_flight.is_empty() && self.queries_in_flight.is_empty() {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            self.poll_timeout((deadline - now).min(Duration::from_millis(50)));
        }
    }

    fn handle_report(&mut self, report: TaskReport) {
        match report.tag {
            TaskTag::Proof { key, generation, spans, theorem_span } => {
                if self.in_flight.get(&key) == Some(&generation) {
                    self.in_flight.remove(&key);
                }
                let Some(slot) = self.keys.lookup(key) else { return };
                let Computation::Pure(c) = &slot.computation else { return };
                let remap = |s: SpanId| -> SpanId {
                    if s == theorem_span {
                        return c.theorem_span;
                    }
                    spans.iter().position(|x| *x == s).and_then(|i| c.program.get(i)).map_or(s, |p| p.span)
                };
                let result = match report.outcome {
                    Outcome::Cancelled => return,
                    Outcome::Finished(ProverResponse::Proof(t)) => Ok(t),
                    Outcome::Finished(other) => {
                        Err(BranchError { span: c.theorem_span, message: format!("unexpected answer {other:?}") })
                    }
                    Outcome::Failed(e) => {
                        let message = match e.kind {
                            ErrorKind::Logic => e.message,
                            ErrorKind::Infrastructure => format!("worker failure: {}", e.message),
                        };
                        let last = c.program.last().map_or(c.theorem_span, |s| s.span);
                        let span = e.span.map_or(last, remap);
                        Err(BranchError { span, message })
                    }
                };
                if self.keys.resolve(key, generation, result) {
                    self.after_resolution(key);
                }
            }
            TaskTag::Query { span } => {
                self.queries_in_flight.remove(&span);
                let result = match report.outcome {
                    Outcome::Finished(ProverResponse::Query(text)) => Ok(text),
                    Outcome::Finished(other) => Err(format!("unexpected answer {other:?}")),
                    Outcome::Failed(e) => Err(e.message),
                    Outcome::Cancelled => return,
                };
                self.record_query(span, result);
            }
            // a batch that is over
            TaskTag::Par { .. } => {}
        }
    }

    /// Computes every master state.
    pub fn compute_master(&mut self) -> Result<Arc<SystemState>, Failure> {
        let mut last = None;
        for n in self.dag.master_nodes() {
            last = Some(self.compute_state(n));
        }
        last.expect("master has the initial node")
    }

    /// Forces every pending proof of this document in-process.
    pub fn force_all(&mut self) {
        for qed in self.dag.proofs.iter().filter_map(|p| p.qed).collect::<Vec<_>>() {
            if let Some(key) = self.qed_keys.get(&qed).copied() {
                let _ = self.future_force(key);
            }
        }
    }

    /// Resolves promises with answers computed elsewhere, found by the
    /// theorem span the request carried.
    pub fn resolve_by_theorem_span(&mut self, theorem_span: SpanId, result: Result<Term, BranchError>) -> bool {
        let Some(p) = self.dag.proofs.iter().find(|p| p.theorem_span == theorem_span) else { return false };
        let Some(key) = p.qed.and_then(|q| self.qed_keys.get(&q).copied()) else { return false };
        let Some(slot) = self.keys.lookup(key) else { return false };
        let taken = self.keys.resolve(key, slot.generation, result);
        if taken {
            self.in_flight.remove(&key);
            self.after_resolution(key);
        }
        taken
    }

    /// The state after the whole document, if it has been computed.
    pub fn final_state(&self) -> Option<&NodeResult> {
        self.memo.get(&self.dag.master_tip)
    }

    /// The final environment with every known proof result filled in.
    pub fn environment(&self) -> Option<Environment> {
        let Some(Ok(state)) = self.final_state() else { return None };
        Some(resolved_env(&state.env, &self.keys))
    }

    /// Synchronous well-foundedness of this document's own theorems. Imported
    /// theorems are trusted; proofs that have not run count as failures.
    pub fn check_swf(&self) -> Result<(), Vec<(String, KernelError)>> {
        let Some(Ok(state)) = self.final_state() else {
            return Err(vec![("<document>".into(), KernelError::ProofFailed("the document has errors".into()))]);
        };
        let keys = &self.keys;
        check_swf_with(&state.env, &mut |_: &str, promise: &ProofPromise| match &promise.status {
            PromiseStatus::Finished(t) => Forced::Term(t.clone()),
            PromiseStatus::Failed(e) => Forced::Failed(e.clone()),
            PromiseStatus::Delegated { key, .. } => match keys.lookup(*key) {
                None => Forced::Failed(format!("no promise behind key {key}")),
                Some(slot) => match (&slot.computation, slot.result) {
                    (Computation::Imported { .. } | Computation::Stored { .. }, _) => Forced::Skip,
                    (_, Some(Ok(t))) => Forced::Term(t),
                    (_, Some(Err(e))) => Forced::Failed(e.message),
                    (_, None) => Forced::Failed("the proof has not been run".into()),
                },
            },
        })
    }

    /// Requests still sitting in a queue without workers.
    pub fn dump(&self) -> Vec<super::tasks::ProverRequest> {
        match &self.mode {
            ProofMode::Queue(q) => q.dump().unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

/// Replaces delegated promises that have a result in `keys`.
pub fn resolved_env(env: &Environment, keys: &KeyTable) -> Environment {
    let mut out = env.clone();
    for entry in env.entries() {
        let EnvEntry::Opaque { name, statement, promise } = entry else { continue };
        let PromiseStatus::Delegated { key, .. } = promise.status else { continue };
        let resolved = match keys.lookup(key).and_then(|s| s.result) {
            Some(Ok(t)) => ProofPromise::finished(statement.clone(), t),
            Some(Err(e)) => ProofPromise::failed(statement.clone(), e.message),
            None => continue,
        };
        if let Some(next) = out.with_promise(name, resolved) {
            out = next;
        }
    }
    out
}

fn computation_for(branch: &ProofBranch, produces: crate::kernel::Formula) -> PureComputation {
    PureComputation {
        base: branch.root,
        program: branch.program.clone(),
        produces,
        theorem_span: branch.theorem_span,
        cancel: branch.cancel.clone(),
        fingerprint: branch.fingerprint,
    }
}
