use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::cancel::CancelSwitch;
use crate::digest::Digest;
use crate::engine::{HintDb, ProofState};
use crate::ids::{ExtrudedKey, SpanId, StateId};
use crate::kernel::{Environment, Formula, Term};
use crate::vernac::CommandAst;

use super::tasks::ProverRequest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenProof {
    pub name: String,
    pub statement: Formula,
    pub ps: ProofState,
}

/// Everything a transaction can read or change.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub env: Environment,
    /// Hints with global effect.
    pub hints: HintDb,
    pub proof: Option<OpenProof>,
    /// Modules brought in by `Require`, in load order.
    pub loaded: Vec<String>,
    /// Session-local data reachable through extruded keys. Never serialized,
    /// so a state that crossed a process boundary resolves no key.
    #[serde(skip)]
    pub extruded: KeyTable,
}

impl PartialEq for SystemState {
    fn eq(&self, other: &SystemState) -> bool {
        self.env == other.env && self.hints == other.hints && self.proof == other.proof && self.loaded == other.loaded
    }
}

impl SystemState {
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }
}

/// One labeled step of a proof branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStep {
    pub span: SpanId,
    pub command: CommandAst,
}

/// A branch's program paired with the state it has to run in.
#[derive(Debug, Clone)]
pub struct PureComputation {
    pub base: StateId,
    pub program: Vec<ProgramStep>,
    pub produces: Formula,
    /// Span blamed when the program ends with open goals and has no steps.
    pub theorem_span: SpanId,
    pub cancel: CancelSwitch,
    /// Fingerprint of the branch text; equal fingerprints mean equal programs.
    pub fingerprint: Digest,
}

#[derive(Debug, Clone)]
pub enum Computation {
    Pure(PureComputation),
    /// A theorem imported from a complete module; trusted, its term never read.
    Imported {
        module: String,
    },
    /// A theorem imported from an incomplete module, with its saved request.
    Stored {
        module: String,
        request: Box<ProverRequest>,
    },
}

/// Why a proof did not produce a term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchError {
    pub span: SpanId,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct KeySlot {
    /// The node whose state minted the key; the slot dies with it.
    pub owner: StateId,
    pub computation: Computation,
    /// Bumped whenever the computation is replaced, to discard stale results.
    pub generation: u64,
    pub result: Option<Result<Term, BranchError>>,
}

#[derive(Debug, Default)]
struct KeyTableInner {
    next: u64,
    slots: BTreeMap<ExtrudedKey, KeySlot>,
}

/// The side table behind extruded keys, shared by every state of a session.
#[derive(Debug, Clone, Default)]
pub struct KeyTable(Arc<Mutex<KeyTableInner>>);

impl KeyTable {
    pub fn new() -> KeyTable {
        KeyTable::default()
    }

    fn lock(&self) -> MutexGuard<'_, KeyTableInner> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn mint(&self, owner: StateId, computation: Computation) -> ExtrudedKey {
        let mut t = self.lock();
        t.next += 1;
        let key = ExtrudedKey(t.next);
        t.slots.insert(key, KeySlot { owner, computation, generation: 0, result: None });
        key
    }

    /// A copy of the slot, or `None` if the key is unknown to this table.
    pub fn lookup(&self, key: ExtrudedKey) -> Option<KeySlot> {
        self.lock().slots.get(&key).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> Vec<ExtrudedKey> {
        self.lock().slots.keys().copied().collect()
    }

    /// Records a result unless one is already present or `generation` is stale.
    /// Returns whether the result was taken.
    pub fn resolve(&self, key: ExtrudedKey, generation: u64, result: Result<Term, BranchError>) -> bool {
        let mut t = self.lock();
        match t.slots.get_mut(&key) {
            Some(slot) if slot.generation == generation && slot.result.is_none() => {
                slot.result = Some(result);
                true
            }
            _ => false,
        }
    }

    /// Puts a new computation behind an existing key, cancelling the old one.
    pub fn replace(&self, key: ExtrudedKey, computation: Computation) {
        let mut t = self.lock();
        if let Some(slot) = t.slots.get_mut(&key) {
            if let Computation::Pure(old) = &slot.computation {
                old.cancel.cancel();
            }
            slot.computation = computation;
            slot.generation += 1;
            slot.result = None;
        }
    }

    /// Points an unchanged computation at the spans of the current document,
    /// keeping any result. Spans are matched by position in the program.
    pub fn rebind(&self, key: ExtrudedKey, program: &[ProgramStep], theorem_span: SpanId) {
        let mut t = self.lock();
        let Some(slot) = t.slots.get_mut(&key) else {
            return;
        };
        let Computation::Pure(c) = &mut slot.computation else {
            return;
        };
        if c.program.len() != program.len() {
            return;
        }
        let map = |s: SpanId| -> SpanId {
            if s == c.theorem_span {
                return theorem_span;
            }
            c.program.iter().position(|p| p.span == s).map_or(s, |i| program[i].span)
        };
        if let Some(Err(e)) = &mut slot.result {
            e.span = map(e.span);
        }
        c.program = program.to_vec();
        c.theorem_span = theorem_span;
    }

    /// Drops every slot whose owner fails `keep`, cancelling pending work.
    pub fn prune(&self, keep: impl Fn(StateId) -> bool) -> usize {
        let mut t = self.lock();
        let before = t.slots.len();
        t.slots.retain(|_, slot| {
            let alive = keep(slot.owner);
            if !alive {
                if let Computation::Pure(c) = &slot.computation {
                    c.cancel.cancel();
                }
            }
            alive
        });
        before - t.slots.len()
    }
}
