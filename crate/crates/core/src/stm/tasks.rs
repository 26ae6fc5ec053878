//! The three kinds of delegable work: proofs, queries and `par:` goals.

use std::num::NonZeroUsize;
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use super::exec::{run_program, run_query};
use super::state::{ProgramStep, SystemState};
use crate::digest::Digest;
use crate::engine::{solve_goal, Goal, TacticAst};
use crate::ids::{ExtrudedKey, SpanId};
use crate::kernel::{Formula, Term};
use crate::taskqueue::{Age, ErrorKind, ErrorReport, Outcome, Performer, Task, Verdict};
use crate::vernac::CommandAst;

/// Base state of a request: shipped whole, or named by digest for a worker
/// known to hold it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Full(Box<SystemState>),
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum ProverRequest {
    Proof {
        digest: Digest,
        base: Base,
        program: Vec<ProgramStep>,
        produces: Formula,
        theorem_span: SpanId,
        /// Artificial delay before running, for latency experiments.
        delay_ms: u64,
    },
    Query {
        digest: Digest,
        base: Base,
        span: SpanId,
        command: CommandAst,
    },
    Par {
        digest: Digest,
        base: Base,
        goal: Goal,
        tactic: TacticAst,
    },
}

impl Eq for ProverRequest {}

impl ProverRequest {
    pub fn base(&self) -> &Base {
        match self {
            ProverRequest::Proof { base, .. } | ProverRequest::Query { base, .. } | ProverRequest::Par { base, .. } => {
                base
            }
        }
    }

    pub fn digest(&self) -> Digest {
        match self {
            ProverRequest::Proof { digest, .. }
            | ProverRequest::Query { digest, .. }
            | ProverRequest::Par { digest, .. } => *digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ProverResponse {
    Proof(Term),
    Query(String),
    Par(Term),
}

pub const WORKER_CACHE: usize = 4;

/// Serves prover requests; keeps the last few base states by digest.
pub struct ProverWorker {
    cache: LruCache<Digest, Arc<SystemState>>,
}

impl Default for ProverWorker {
    fn default() -> Self {
        ProverWorker::new()
    }
}

impl ProverWorker {
    pub fn new() -> ProverWorker {
        ProverWorker { cache: LruCache::new(NonZeroUsize::new(WORKER_CACHE).expect("non-zero")) }
    }

    fn base(&mut self, digest: Digest, base: Base) -> Result<Arc<SystemState>, ErrorReport> {
        match base {
            Base::Full(state) => {
                let state: Arc<SystemState> = Arc::new(*state);
                self.cache.put(digest, state.clone());
                Ok(state)
            }
            Base::Delta => self
                .cache
                .get(&digest)
                .cloned()
                .ok_or_else(|| ErrorReport::infrastructure(format!("base state {digest:?} is not cached"))),
        }
    }

    /// Runs a request in-process; what a worker would answer.
    pub fn run(&mut self, request: ProverRequest) -> Result<ProverResponse, ErrorReport> {
        match request {
            ProverRequest::Proof { digest, base, program, produces, theorem_span, delay_ms } => {
                let state = self.base(digest, base)?;
                if delay_ms > 0 {
                    thread::sleep(Duration::from_millis(delay_ms));
                }
                run_program(&state, &program, &produces, theorem_span, |_, _| {})
                    .map(ProverResponse::Proof)
                    .map_err(|e| ErrorReport::logic(e.message, Some(e.span)))
            }
            ProverRequest::Query { digest, base, span, command } => {
                let state = self.base(digest, base)?;
                run_query(&state, &command).map(ProverResponse::Query).map_err(|m| ErrorReport::logic(m, Some(span)))
            }
            ProverRequest::Par { digest, base, goal, tactic } => {
                let state = self.base(digest, base)?;
                let hints = state.proof.as_ref().map(|p| p.ps.hints.clone()).unwrap_or_else(|| state.hints.clone());
                solve_goal(&state.env, &hints, goal, &tactic)
                    .map(ProverResponse::Par)
                    .map_err(|e| ErrorReport::logic(e.to_string(), None))
            }
        }
    }
}

impl Performer for ProverWorker {
    type Request = ProverRequest;
    type Response = ProverResponse;

    fn perform(&mut self, request: ProverRequest) -> Result<ProverResponse, ErrorReport> {
        self.run(request)
    }

    fn cached(&self) -> Vec<Digest> {
        self.cache.iter().map(|(d, _)| *d).collect()
    }
}

/// What a task was for, echoed back with its outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskTag {
    /// `spans` are the program's spans when the task was made, so a late
    /// failure can be mapped onto the spans of a newer document.
    Proof {
        key: ExtrudedKey,
        generation: u64,
        spans: Vec<SpanId>,
        theorem_span: SpanId,
    },
    Query {
        span: SpanId,
    },
    Par {
        batch: u64,
        index: usize,
    },
}

#[derive(Debug)]
pub struct TaskReport {
    pub tag: TaskTag,
    pub outcome: Outcome<ProverResponse>,
}

#[derive(Debug, Clone)]
pub enum TaskKind {
    Proof { program: Vec<ProgramStep>, produces: Formula, theorem_span: SpanId, delay_ms: u64 },
    Query { span: SpanId, command: CommandAst },
    Par { goal: Goal, tactic: TacticAst },
}

pub struct ProverTask {
    pub kind: TaskKind,
    pub base: Arc<SystemState>,
    pub digest: Digest,
    pub tag: TaskTag,
    pub reply: Sender<TaskReport>,
}

impl ProverTask {
    pub fn new(kind: TaskKind, base: Arc<SystemState>, tag: TaskTag, reply: Sender<TaskReport>) -> ProverTask {
        let digest = base.digest();
        ProverTask { kind, base, digest, tag, reply }
    }

    /// A task for a request that carries its whole base state, as dumped
    /// requests do. `None` for a delta request.
    pub fn from_request(request: ProverRequest, tag: TaskTag, reply: Sender<TaskReport>) -> Option<ProverTask> {
        let (kind, base) = match request {
            ProverRequest::Proof { base: Base::Full(base), program, produces, theorem_span, delay_ms, .. } => {
                (TaskKind::Proof { program, produces, theorem_span, delay_ms }, base)
            }
            ProverRequest::Query { base: Base::Full(base), span, command, .. } => {
                (TaskKind::Query { span, command }, base)
            }
            ProverRequest::Par { base: Base::Full(base), goal, tactic, .. } => (TaskKind::Par { goal, tactic }, base),
            _ => return None,
        };
        Some(ProverTask::new(kind, Arc::new(*base), tag, reply))
    }

    pub fn request(&self, full: bool) -> ProverRequest {
        let digest = self.digest;
        let base = if full { Base::Full(Box::new((*self.base).clone())) } else { Base::Delta };
        match &self.kind {
            TaskKind::Proof { program, produces, theorem_span, delay_ms } => ProverRequest::Proof {
                digest,
                base,
                program: program.clone(),
                produces: produces.clone(),
                theorem_span: *theorem_span,
                delay_ms: *delay_ms,
            },
            TaskKind::Query { span, command } => {
                ProverRequest::Query { digest, base, span: *span, command: command.clone() }
            }
            TaskKind::Par { goal, tactic } => {
                ProverRequest::Par { digest, base, goal: goal.clone(), tactic: tactic.clone() }
            }
        }
    }
}

impl Task for ProverTask {
    type Request = ProverRequest;
    type Response = ProverResponse;

    fn name(&self) -> String {
        match (&self.kind, &self.tag) {
            (TaskKind::Proof { theorem_span, .. }, _) => format!("proof of span {theorem_span}"),
            (TaskKind::Query { span, .. }, _) => format!("query at span {span}"),
            (TaskKind::Par { .. }, TaskTag::Par { index, .. }) => format!("par goal {index}"),
            (TaskKind::Par { .. }, _) => "par goal".into(),
        }
    }

    fn request_of_task(&self, age: Age, cached: &[Digest]) -> Option<ProverRequest> {
        let warm = age == Age::Old && cached.contains(&self.digest);
        Some(self.request(!warm))
    }

    fn is_delta(request: &ProverRequest) -> bool {
        matches!(request.base(), Base::Delta)
    }

    fn use_response(&self, outcome: Outcome<ProverResponse>) -> Verdict {
        let verdict = match &outcome {
            Outcome::Failed(e) if e.kind == ErrorKind::Infrastructure => Verdict::Reset,
            _ => Verdict::Stay,
        };
        // the session may be gone; then nobody wants the answer
        let _ = self.reply.send(TaskReport { tag: self.tag.clone(), outcome });
        verdict
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::StateId;
    use crate::stm::exec::{execute, NoModules, Side};
    use crate::vernac::parse_str;

    fn theorem_state() -> SystemState {
        let mut s = SystemState::default();
        for c in ["Definition decidable (P : Prop) := P \\/ ~ P.", "Theorem dec_False : decidable False."] {
            s = execute(&s, &parse_str(c).unwrap().ast, Side::Master, &NoModules, StateId(1)).unwrap();
        }
        s
    }

    fn proof_request(base: Base, digest: Digest) -> ProverRequest {
        let program = ["Proof.", "unfold decidable, not.", "auto."]
            .iter()
            .enumerate()
            .map(|(i, t)| ProgramStep { span: SpanId(i as i64 + 2), command: parse_str(t).unwrap().ast })
            .collect();
        ProverRequest::Proof {
            digest,
            base,
            program,
            produces: Formula::app("decidable", vec![Formula::False]),
            theorem_span: SpanId(1),
            delay_ms: 0,
        }
    }

    #[test]
    fn proof_request_yields_the_decidable_term_and_caches_the_base() {
        let s = theorem_state();
        let d = s.digest();
        let mut w = ProverWorker::new();
        assert!(w.run(proof_request(Base::Delta, d)).is_err());
        let full = w.run(proof_request(Base::Full(Box::new(s.clone())), d)).unwrap();
        assert_eq!(
            full,
            ProverResponse::Proof(Term::inr(Term::lam("h", Formula::False, Term::var("h")), Formula::False))
        );
        assert_eq!(w.run(proof_request(Base::Delta, d)).unwrap(), full);
        assert_eq!(w.cached(), vec![d]);
    }

    #[test]
    fn cache_evicts_least_recently_used() {
        let mut w = ProverWorker::new();
        let states: Vec<SystemState> = (0..5)
            .map(|i| {
                let c = format!("Axiom a{i} : True.");
                execute(&SystemState::default(), &parse_str(&c).unwrap().ast, Side::Master, &NoModules, StateId(1))
                    .unwrap()
            })
            .collect();
        let query = |s: &SystemState, base| ProverRequest::Query {
            digest: s.digest(),
            base,
            span: SpanId(0),
            command: parse_str("Check True.").unwrap().ast,
        };
        for s in &states[..4] {
            w.run(query(s, Base::Full(Box::new(s.clone())))).unwrap();
        }
        // touch the first so the second becomes the oldest
        w.run(query(&states[0], Base::Delta)).unwrap();
        w.run(query(&states[4], Base::Full(Box::new(states[4].clone())))).unwrap();
        assert!(w.run(query(&states[0], Base::Delta)).is_ok());
        assert!(w.run(query(&states[1], Base::Delta)).is_err());
        assert_eq!(w.cached().len(), WORKER_CACHE);
    }

    #[test]
    fn request_wire_form_is_tagged() {
        let s = theorem_state();
        let v: serde_json::Value = serde_json::to_value(proof_request(Base::Delta, s.digest())).unwrap();
        assert_eq!(v["kind"], "proof");
        assert_eq!(v["body"]["base"], "delta");
        let back: ProverRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, proof_request(Base::Delta, s.digest()));
    }
}
