use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Formula, KernelError, Term};
use crate::ids::{ExtrudedKey, StateId};

/// Where the evidence of an opaque theorem stands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromiseStatus {
    /// The proof is a pending computation. `key` resolves only in the session
    /// that delegated it; `base` is the state the computation must run in.
    Delegated {
        key: ExtrudedKey,
        base: StateId,
    },
    Finished(Term),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofPromise {
    pub statement: Formula,
    pub status: PromiseStatus,
}

impl ProofPromise {
    pub fn delegated(statement: Formula, key: ExtrudedKey, base: StateId) -> ProofPromise {
        ProofPromise { statement, status: PromiseStatus::Delegated { key, base } }
    }

    pub fn finished(statement: Formula, term: Term) -> ProofPromise {
        ProofPromise { statement, status: PromiseStatus::Finished(term) }
    }

    pub fn failed(statement: Formula, error: impl Into<String>) -> ProofPromise {
        ProofPromise { statement, status: PromiseStatus::Failed(error.into()) }
    }

    pub fn is_delegated(&self) -> bool {
        matches!(self.status, PromiseStatus::Delegated { .. })
    }

    /// Moves a delegated promise to its terminal status. Returns `false`, and
    /// leaves the promise untouched, if it was already resolved.
    pub fn resolve(&mut self, outcome: Result<Term, String>) -> bool {
        if !self.is_delegated() {
            return false;
        }
        self.status = match outcome {
            Ok(t) => PromiseStatus::Finished(t),
            Err(e) => PromiseStatus::Failed(e),
        };
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvEntry {
    Definition {
        name: String,
        params: Vec<String>,
        body: Formula,
    },
    Axiom {
        name: String,
        statement: Formula,
    },
    /// A theorem whose evidence the typing judgment never looks at.
    Opaque {
        name: String,
        statement: Formula,
        promise: ProofPromise,
    },
}

impl EnvEntry {
    pub fn name(&self) -> &str {
        match self {
            EnvEntry::Definition { name, .. } | EnvEntry::Axiom { name, .. } | EnvEntry::Opaque { name, .. } => name,
        }
    }

    /// The statement proved by this entry, if it is a proof-level name.
    pub fn statement(&self) -> Option<&Formula> {
        match self {
            EnvEntry::Definition { .. } => None,
            EnvEntry::Axiom { statement, .. } | EnvEntry::Opaque { statement, .. } => Some(statement),
        }
    }
}

/// An ordered logical environment with value semantics.
///
/// Entries are shared, so extending an environment copies only pointers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    entries: Vec<Arc<EnvEntry>>,
}

/// Read-only view over a prefix of an environment.
#[derive(Clone, Copy)]
pub(crate) struct Scope<'a> {
    entries: &'a [Arc<EnvEntry>],
}

impl<'a> Scope<'a> {
    pub(crate) fn get(&self, name: &str) -> Option<&'a EnvEntry> {
        self.entries.iter().rev().find(|e| e.name() == name).map(|e| &**e)
    }

    pub(crate) fn definition(&self, name: &str) -> Option<(&'a [String], &'a Formula)> {
        match self.get(name)? {
            EnvEntry::Definition { params, body, .. } => Some((params, body)),
            _ => None,
        }
    }

    pub(crate) fn check_formula(&self, f: &Formula) -> Result<(), KernelError> {
        match f {
            Formula::Atom(_) | Formula::True | Formula::False => Ok(()),
            Formula::Impl(l, r) | Formula::And(l, r) | Formula::Or(l, r) => {
                self.check_formula(l)?;
                self.check_formula(r)
            }
            Formula::DefApp(d, args) => {
                let (params, _) = self.definition(d).ok_or_else(|| KernelError::UnknownDefinition(d.clone()))?;
                if params.len() != args.len() {
                    return Err(KernelError::Arity { name: d.clone(), expected: params.len(), found: args.len() });
                }
                args.iter().try_for_each(|a| self.check_formula(a))
            }
        }
    }

    /// Complete delta-expansion. Definitions only mention earlier
    /// definitions, so this terminates.
    pub(crate) fn normalize(&self, f: &Formula) -> Result<Formula, KernelError> {
        Ok(match f {
            Formula::Atom(_) | Formula::True | Formula::False => f.clone(),
            Formula::Impl(l, r) => Formula::imp(self.normalize(l)?, self.normalize(r)?),
            Formula::And(l, r) => Formula::and(self.normalize(l)?, self.normalize(r)?),
            Formula::Or(l, r) => Formula::or(self.normalize(l)?, self.normalize(r)?),
            Formula::DefApp(d, args) => {
                let (params, body) = self.definition(d).ok_or_else(|| KernelError::UnknownDefinition(d.clone()))?;
                if params.len() != args.len() {
                    return Err(KernelError::Arity { name: d.clone(), expected: params.len(), found: args.len() });
                }
                let args = args.iter().map(|a| self.normalize(a)).collect::<Result<Vec<_>, _>>()?;
                self.normalize(&body.subst(params, &args))?
            }
        })
    }
}

impl Environment {
    pub fn new() -> Environment {
        Environment::default()
    }

    pub(crate) fn scope(&self) -> Scope<'_> {
        Scope { entries: &self.entries }
    }

    pub(crate) fn prefix_scope(&self, len: usize) -> Scope<'_> {
        Scope { entries: &self.entries[..len] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &EnvEntry> + '_ {
        self.entries.iter().map(|e| &**e)
    }

    pub fn get(&self, name: &str) -> Option<&EnvEntry> {
        self.scope().get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn definition(&self, name: &str) -> Option<(&[String], &Formula)> {
        self.scope().definition(name)
    }

    /// The first `len` entries as an environment of their own.
    pub fn prefix(&self, len: usize) -> Environment {
        Environment { entries: self.entries[..len].to_vec() }
    }

    /// Checks that every definition application resolves with the right arity.
    pub fn check_formula(&self, f: &Formula) -> Result<(), KernelError> {
        self.scope().check_formula(f)
    }

    pub fn normalize(&self, f: &Formula) -> Result<Formula, KernelError> {
        self.scope().normalize(f)
    }

    /// Equality up to unfolding of definitions.
    pub fn convertible(&self, a: &Formula, b: &Formula) -> Result<bool, KernelError> {
        Ok(a == b || self.normalize(a)? == self.normalize(b)?)
    }

    /// Turns bare names that denote definitions into applications, leaving
    /// the names in `bound` (definition parameters) as atoms.
    pub fn elaborate(&self, f: &Formula, bound: &[String]) -> Result<Formula, KernelError> {
        Ok(match f {
            Formula::Atom(a) if !bound.contains(a) => match self.definition(a) {
                Some(([], _)) => Formula::DefApp(a.clone(), vec![]),
                Some((params, _)) => {
                    return Err(KernelError::Arity { name: a.clone(), expected: params.len(), found: 0 })
                }
                None => f.clone(),
            },
            Formula::Atom(_) | Formula::True | Formula::False => f.clone(),
            Formula::Impl(l, r) => Formula::imp(self.elaborate(l, bound)?, self.elaborate(r, bound)?),
            Formula::And(l, r) => Formula::and(self.elaborate(l, bound)?, self.elaborate(r, bound)?),
            Formula::Or(l, r) => Formula::or(self.elaborate(l, bound)?, self.elaborate(r, bound)?),
            Formula::DefApp(d, args) => {
                let args = args.iter().map(|a| self.elaborate(a, bound)).collect::<Result<Vec<_>, _>>()?;
                let out = Formula::DefApp(d.clone(), args);
                self.check_formula(&out)?;
                out
            }
        })
    }

    fn fresh(&self, name: &str) -> Result<(), KernelError> {
        if self.contains(name) {
            Err(KernelError::DuplicateName(name.to_string()))
        } else {
            Ok(())
        }
    }

    fn push(&self, entry: EnvEntry) -> Environment {
        let mut entries = self.entries.clone();
        entries.push(Arc::new(entry));
        Environment { entries }
    }

    pub fn add_definition(&self, name: &str, params: Vec<String>, body: Formula) -> Result<Environment, KernelError> {
        self.fresh(name)?;
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                return Err(KernelError::IllFormed {
                    name: name.to_string(),
                    reason: format!("parameter `{p}` bound twice"),
                });
            }
        }
        self.check_formula(&body).map_err(|e| KernelError::ill_formed(name, e))?;
        Ok(self.push(EnvEntry::Definition { name: name.to_string(), params, body }))
    }

    pub fn add_axiom(&self, name: &str, statement: Formula) -> Result<Environment, KernelError> {
        self.fresh(name)?;
        self.check_formula(&statement).map_err(|e| KernelError::ill_formed(name, e))?;
        Ok(self.push(EnvEntry::Axiom { name: name.to_string(), statement }))
    }

    /// Admits a theorem before its evidence is known. The promise status is
    /// irrelevant here; only the synchronous check looks at it.
    pub fn add_opaque(
        &self,
        name: &str,
        statement: Formula,
        promise: ProofPromise,
    ) -> Result<Environment, KernelError> {
        self.fresh(name)?;
        self.check_formula(&statement).map_err(|e| KernelError::ill_formed(name, e))?;
        if promise.statement != statement {
            return Err(KernelError::StatementMismatch {
                name: name.to_string(),
                expected: statement.to_string(),
                found: promise.statement.to_string(),
            });
        }
        Ok(self.push(EnvEntry::Opaque { name: name.to_string(), statement, promise }))
    }

    /// Replaces the promise of opaque entry `name`, keeping everything else.
    pub fn with_promise(&self, name: &str, promise: ProofPromise) -> Option<Environment> {
        let idx = self.entries.iter().rposition(|e| e.name() == name)?;
        let EnvEntry::Opaque { statement, .. } = &*self.entries[idx] else {
            return None;
        };
        if promise.statement != *statement {
            return None;
        }
        let mut entries = self.entries.clone();
        entries[idx] = Arc::new(EnvEntry::Opaque { name: name.to_string(), statement: statement.clone(), promise });
        Some(Environment { entries })
    }

    /// Asynchronous well-foundedness: names fresh and statements well formed
    /// in their prefix. Promise status plays no role.
    pub fn check_awf(&self) -> Result<(), KernelError> {
        for (i, entry) in self.entries.iter().enumerate() {
            let prefix = self.prefix_scope(i);
            if prefix.get(entry.name()).is_some() {
                return Err(KernelError::DuplicateName(entry.name().to_string()));
            }
            let (f, name) = match &**entry {
                EnvEntry::Definition { body, name, .. } => (body, name),
                EnvEntry::Axiom { statement, name } => (statement, name),
                EnvEntry::Opaque { statement, name, promise } => {
                    if promise.statement != *statement {
                        return Err(KernelError::StatementMismatch {
                            name: name.clone(),
                            expected: statement.to_string(),
                            found: promise.statement.to_string(),
                        });
                    }
                    (statement, name)
                }
            };
            prefix.check_formula(f).map_err(|e| KernelError::ill_formed(name, e))?;
        }
        Ok(())
    }
}
