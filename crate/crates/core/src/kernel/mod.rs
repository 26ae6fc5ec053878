//! The trusted checker.
//!
//! Formulas are propositional, proofs are annotated natural-deduction terms,
//! and checking is syntax directed. Definitions are transparent and unfolded
//! completely before comparison; opaque theorems contribute their statement
//! only.

mod env;
mod formula;
mod term;

pub use env::{EnvEntry, Environment, PromiseStatus, ProofPromise};
pub use formula::Formula;
pub use term::Term;

use env::Scope;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum KernelError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch: expected `{expected}`, found `{found}`")]
    Mismatch { expected: String, found: String },
    #[error("`{name}` expects {expected} argument(s) but is given {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("unknown definition `{0}`")]
    UnknownDefinition(String),
    #[error("`{0}` is already defined")]
    DuplicateName(String),
    #[error("`{name}` is ill-formed: {reason}")]
    IllFormed { name: String, reason: String },
    #[error("statement of `{name}` is `{expected}` but its promise proves `{found}`")]
    StatementMismatch { name: String, expected: String, found: String },
    #[error("proof failed: {0}")]
    ProofFailed(String),
    #[error("proof of `{0}` was never resolved")]
    Unresolved(String),
}

impl KernelError {
    pub(crate) fn ill_formed(name: &str, cause: KernelError) -> KernelError {
        KernelError::IllFormed { name: name.to_string(), reason: cause.to_string() }
    }
}

fn mismatch(expected: &Formula, found: impl ToString) -> KernelError {
    KernelError::Mismatch { expected: expected.to_string(), found: found.to_string() }
}

/// `env; ctx ⊢ term : expected`.
pub fn typecheck(
    env: &Environment,
    ctx: &[(String, Formula)],
    term: &Term,
    expected: &Formula,
) -> Result<(), KernelError> {
    typecheck_in(env.scope(), ctx, term, expected)
}

/// Infers the (fully unfolded) formula proved by `term`.
pub fn infer(env: &Environment, ctx: &[(String, Formula)], term: &Term) -> Result<Formula, KernelError> {
    let mut checker = Checker::new(env.scope(), ctx)?;
    checker.infer(term)
}

fn typecheck_in(
    scope: Scope<'_>,
    ctx: &[(String, Formula)],
    term: &Term,
    expected: &Formula,
) -> Result<(), KernelError> {
    scope.check_formula(expected)?;
    let expected = scope.normalize(expected)?;
    let mut checker = Checker::new(scope, ctx)?;
    checker.check(term, &expected)
}

/// Hypotheses are kept normalized so every comparison is syntactic.
struct Checker<'a> {
    scope: Scope<'a>,
    hyps: Vec<(String, Formula)>,
}

impl<'a> Checker<'a> {
    fn new(scope: Scope<'a>, ctx: &[(String, Formula)]) -> Result<Checker<'a>, KernelError> {
        let mut hyps = Vec::with_capacity(ctx.len());
        for (name, f) in ctx {
            scope.check_formula(f)?;
            hyps.push((name.clone(), scope.normalize(f)?));
        }
        Ok(Checker { scope, hyps })
    }

    fn annotation(&self, f: &Formula) -> Result<Formula, KernelError> {
        self.scope.check_formula(f)?;
        self.scope.normalize(f)
    }

    fn under<T>(&mut self, name: &str, ty: Formula, k: impl FnOnce(&mut Self) -> T) -> T {
        self.hyps.push((name.to_string(), ty));
        let out = k(self);
        self.hyps.pop();
        out
    }

    fn check(&mut self, term: &Term, expected: &Formula) -> Result<(), KernelError> {
        match (term, expected) {
            (Term::Lam(x, ann, body), Formula::Impl(dom, cod)) => {
                let ann = self.annotation(ann)?;
                if ann != **dom {
                    return Err(mismatch(dom, &ann));
                }
                self.under(x, ann, |c| c.check(body, cod))
            }
            (Term::Lam(..), _) => Err(mismatch(expected, "an implication")),
            (Term::Pair(a, b), Formula::And(l, r)) => {
                self.check(a, l)?;
                self.check(b, r)
            }
            (Term::Pair(..), _) => Err(mismatch(expected, "a conjunction")),
            (Term::Inl(t, ann), Formula::Or(l, r)) => {
                let ann = self.annotation(ann)?;
                if ann != **r {
                    return Err(mismatch(r, &ann));
                }
                self.check(t, l)
            }
            (Term::Inr(t, ann), Formula::Or(l, r)) => {
                let ann = self.annotation(ann)?;
                if ann != **l {
                    return Err(mismatch(l, &ann));
                }
                self.check(t, r)
            }
            (Term::Inl(..) | Term::Inr(..), _) => Err(mismatch(expected, "a disjunction")),
            (Term::Case(scrut, x, l, y, r), _) => match self.infer(scrut)? {
                Formula::Or(a, b) => {
                    self.under(x, *a, |c| c.check(l, expected))?;
                    self.under(y, *b, |c| c.check(r, expected))
                }
                other => Err(KernelError::Mismatch { expected: "a disjunction".into(), found: other.to_string() }),
            },
            (Term::TT, Formula::True) => Ok(()),
            (Term::TT, _) => Err(mismatch(expected, Formula::True)),
            (Term::Exfalso(t, ann), _) => {
                let ann = self.annotation(ann)?;
                if ann != *expected {
                    return Err(mismatch(expected, &ann));
                }
                self.check(t, &Formula::False)
            }
            _ => {
                let found = self.infer(term)?;
                if found == *expected {
                    Ok(())
                } else {
                    Err(mismatch(expected, &found))
                }
            }
        }
    }

    fn infer(&mut self, term: &Term) -> Result<Formula, KernelError> {
        match term {
            Term::Var(x) => {
                if let Some((_, f)) = self.hyps.iter().rev().find(|(n, _)| n == x) {
                    return Ok(f.clone());
                }
                match self.scope.get(x).and_then(EnvEntry::statement) {
                    Some(stmt) => self.scope.normalize(stmt),
                    None => Err(KernelError::UnboundVariable(x.clone())),
                }
            }
            Term::Lam(x, ann, body) => {
                let ann = self.annotation(ann)?;
                let cod = self.under(x, ann.clone(), |c| c.infer(body))?;
                Ok(Formula::imp(ann, cod))
            }
            Term::App(f, a) => match self.infer(f)? {
                Formula::Impl(dom, cod) => {
                    self.check(a, &dom)?;
                    Ok(*cod)
                }
                other => Err(KernelError::Mismatch { expected: "an implication".into(), found: other.to_string() }),
            },
            Term::Pair(a, b) => Ok(Formula::and(self.infer(a)?, self.infer(b)?)),
            Term::Fst(t) | Term::Snd(t) => match self.infer(t)? {
                Formula::And(l, r) => Ok(if matches!(term, Term::Fst(_)) { *l } else { *r }),
                other => Err(KernelError::Mismatch { expected: "a conjunction".into(), found: other.to_string() }),
            },
            Term::Inl(t, ann) => {
                let ann = self.annotation(ann)?;
                Ok(Formula::or(self.infer(t)?, ann))
            }
            Term::Inr(t, ann) => {
                let ann = self.annotation(ann)?;
                Ok(Formula::or(ann, self.infer(t)?))
            }
            Term::Case(scrut, x, l, y, r) => match self.infer(scrut)? {
                Formula::Or(a, b) => {
                    let lt = self.under(x, *a, |c| c.infer(l))?;
                    self.under(y, *b, |c| c.check(r, &lt))?;
                    Ok(lt)
                }
                other => Err(KernelError::Mismatch { expected: "a disjunction".into(), found: other.to_string() }),
            },
            Term::TT => Ok(Formula::True),
            Term::Exfalso(t, ann) => {
                let ann = self.annotation(ann)?;
                self.check(t, &Formula::False)?;
                Ok(ann)
            }
        }
    }
}

/// What forcing an opaque entry's promise produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Forced {
    Term(Term),
    Failed(String),
    /// The entry is trusted (e.g. it was checked in another compilation unit).
    Skip,
}

/// Turns promises into evidence for the synchronous check.
pub trait PromiseForcer {
    fn force(&mut self, name: &str, promise: &ProofPromise) -> Forced;
}

impl<F: FnMut(&str, &ProofPromise) -> Forced> PromiseForcer for F {
    fn force(&mut self, name: &str, promise: &ProofPromise) -> Forced {
        self(name, promise)
    }
}

/// Forces nothing: resolved promises are used as they are and delegated ones
/// count as failures.
pub struct StatusForcer;

impl PromiseForcer for StatusForcer {
    fn force(&mut self, name: &str, promise: &ProofPromise) -> Forced {
        match &promise.status {
            PromiseStatus::Finished(t) => Forced::Term(t.clone()),
            PromiseStatus::Failed(e) => Forced::Failed(e.clone()),
            PromiseStatus::Delegated { .. } => Forced::Failed(KernelError::Unresolved(name.into()).to_string()),
        }
    }
}

/// Synchronous well-foundedness over an environment already admitted
/// asynchronously. Every opaque entry is forced and its evidence checked in
/// the prefix preceding it. Failures are collected, not short-circuited.
pub fn check_swf_with(env: &Environment, forcer: &mut impl PromiseForcer) -> Result<(), Vec<(String, KernelError)>> {
    let mut errors = Vec::new();
    for (i, entry) in env.entries().enumerate() {
        let EnvEntry::Opaque { name, statement, promise } = entry else {
            continue;
        };
        let outcome = match forcer.force(name, promise) {
            Forced::Skip => continue,
            Forced::Failed(msg) => Err(KernelError::ProofFailed(msg)),
            Forced::Term(t) => typecheck_in(env.prefix_scope(i), &[], &t, statement),
        };
        if let Err(e) = outcome {
            errors.push((name.clone(), e));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

pub fn check_swf(env: &Environment) -> Result<(), Vec<(String, KernelError)>> {
    check_swf_with(env, &mut StatusForcer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ExtrudedKey, StateId};

    fn decidable_env() -> Environment {
        let p = Formula::atom("P");
        Environment::new()
            .add_definition("decidable", vec!["P".into()], Formula::or(p.clone(), Formula::negation(p)))
            .unwrap()
    }

    fn dec_false() -> Formula {
        Formula::app("decidable", vec![Formula::False])
    }

    fn decidable_witness() -> Term {
        Term::inr(Term::lam("h", Formula::False, Term::var("h")), Formula::False)
    }

    #[test]
    fn identity_proves_false_implies_false() {
        let t = Term::lam("h", Formula::False, Term::var("h"));
        assert_eq!(typecheck(&Environment::new(), &[], &t, &Formula::negation(Formula::False)), Ok(()));
    }

    #[test]
    fn tt_proves_true() {
        assert_eq!(typecheck(&Environment::new(), &[], &Term::TT, &Formula::True), Ok(()));
    }

    #[test]
    fn decidable_false_witness_checks_through_unfolding() {
        assert_eq!(typecheck(&decidable_env(), &[], &decidable_witness(), &dec_false()), Ok(()));
    }

    #[test]
    fn typecheck_errors() {
        let env = Environment::new();
        assert_eq!(
            typecheck(&env, &[], &Term::var("x"), &Formula::True),
            Err(KernelError::UnboundVariable("x".into()))
        );
        assert!(matches!(typecheck(&env, &[], &Term::TT, &Formula::False), Err(KernelError::Mismatch { .. })));
        let bad = Formula::app("decidable", vec![]);
        assert!(matches!(
            typecheck(&decidable_env(), &[], &Term::TT, &bad),
            Err(KernelError::Arity { expected: 1, found: 0, .. })
        ));
    }

    #[test]
    fn case_and_projections() {
        let a = Formula::atom("A");
        let b = Formula::atom("B");
        // A /\ B -> B /\ A
        let swap = Term::lam(
            "p",
            Formula::and(a.clone(), b.clone()),
            Term::pair(Term::Snd(Box::new(Term::var("p"))), Term::Fst(Box::new(Term::var("p")))),
        );
        let stmt = Formula::imp(Formula::and(a.clone(), b.clone()), Formula::and(b.clone(), a.clone()));
        assert_eq!(typecheck(&Environment::new(), &[], &swap, &stmt), Ok(()));
        // A \/ B -> B \/ A
        let comm = Term::lam(
            "o",
            Formula::or(a.clone(), b.clone()),
            Term::Case(
                Box::new(Term::var("o")),
                "x".into(),
                Box::new(Term::inr(Term::var("x"), b.clone())),
                "y".into(),
                Box::new(Term::inl(Term::var("y"), a.clone())),
            ),
        );
        let stmt = Formula::imp(Formula::or(a.clone(), b.clone()), Formula::or(b, a));
        assert_eq!(typecheck(&Environment::new(), &[], &comm, &stmt), Ok(()));
    }

    #[test]
    fn add_definition_examples() {
        let env = decidable_env();
        assert_eq!(env.len(), 1);
        let env = Environment::new().add_definition("x", vec![], Formula::True).unwrap();
        assert_eq!(env.add_definition("x", vec![], Formula::True), Err(KernelError::DuplicateName("x".into())));
        assert!(matches!(
            Environment::new().add_definition("bad", vec![], Formula::app("missing", vec![])),
            Err(KernelError::IllFormed { .. })
        ));
    }

    #[test]
    fn add_definition_has_value_semantics() {
        let base = Environment::new();
        let ext = base.add_definition("x", vec![], Formula::True).unwrap();
        assert!(base.is_empty());
        assert_eq!(ext.len(), 1);
    }

    #[test]
    fn add_axiom_examples() {
        let a = Formula::atom("A");
        let env = Environment::new().add_axiom("classic", Formula::or(a.clone(), Formula::negation(a))).unwrap();
        assert_eq!(env.len(), 1);
        assert!(matches!(env.add_axiom("classic", Formula::True), Err(KernelError::DuplicateName(_))));
        assert!(matches!(
            Environment::new().add_axiom("ax", Formula::app("nope", vec![])),
            Err(KernelError::IllFormed { .. })
        ));
    }

    #[test]
    fn add_opaque_examples() {
        let env = decidable_env();
        let p = ProofPromise::delegated(dec_false(), ExtrudedKey(7), StateId(2));
        let env2 = env.add_opaque("dec_False", dec_false(), p.clone()).unwrap();
        assert_eq!(env2.len(), 2);
        // a failed promise is still admitted
        let failed = ProofPromise::failed(dec_false(), "boom");
        let env3 = env.add_opaque("dec_False", dec_false(), failed).unwrap();
        assert!(env3.check_awf().is_ok());
        assert_eq!(check_swf(&env3).unwrap_err().len(), 1);
        assert!(matches!(env2.add_opaque("dec_False", dec_false(), p), Err(KernelError::DuplicateName(_))));
        let wrong = ProofPromise::delegated(Formula::True, ExtrudedKey(1), StateId(0));
        assert!(matches!(env.add_opaque("t", dec_false(), wrong), Err(KernelError::StatementMismatch { .. })));
    }

    #[test]
    fn check_swf_examples() {
        let env = decidable_env()
            .add_opaque("dec_False", dec_false(), ProofPromise::finished(dec_false(), decidable_witness()))
            .unwrap();
        assert_eq!(check_swf(&env), Ok(()));
        let env = decidable_env()
            .add_opaque("dec_False", dec_false(), ProofPromise::failed(dec_false(), "tactic failed"))
            .unwrap()
            .add_opaque("t", Formula::True, ProofPromise::finished(Formula::True, Term::TT))
            .unwrap()
            .add_opaque("u", Formula::False, ProofPromise::finished(Formula::False, Term::TT))
            .unwrap();
        let errs = check_swf(&env).unwrap_err();
        assert_eq!(errs.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), ["dec_False", "u"]);
    }

    #[test]
    fn opaque_evidence_checks_in_its_prefix() {
        // the later axiom is not visible to the earlier proof
        let env = Environment::new()
            .add_opaque("t", Formula::atom("A"), ProofPromise::finished(Formula::atom("A"), Term::var("ax")))
            .unwrap()
            .add_axiom("ax", Formula::atom("A"))
            .unwrap();
        assert!(matches!(&check_swf(&env).unwrap_err()[0].1, KernelError::UnboundVariable(_)));
    }

    #[test]
    fn forcer_can_skip_and_substitute() {
        let env = Environment::new()
            .add_opaque("t", Formula::True, ProofPromise::delegated(Formula::True, ExtrudedKey(0), StateId(0)))
            .unwrap();
        assert!(check_swf(&env).is_err());
        assert_eq!(check_swf_with(&env, &mut |_: &str, _: &ProofPromise| Forced::Term(Term::TT)), Ok(()));
        assert_eq!(check_swf_with(&env, &mut |_: &str, _: &ProofPromise| Forced::Skip), Ok(()));
    }

    #[test]
    fn promise_resolution_is_terminal() {
        let mut p = ProofPromise::delegated(Formula::True, ExtrudedKey(0), StateId(0));
        assert!(p.resolve(Ok(Term::TT)));
        assert!(!p.resolve(Err("late".into())));
        assert_eq!(p.status, PromiseStatus::Finished(Term::TT));
    }

    #[test]
    fn elaborate_resolves_nullary_definitions() {
        let env = Environment::new().add_definition("t", vec![], Formula::True).unwrap();
        assert_eq!(env.elaborate(&Formula::atom("t"), &[]).unwrap(), Formula::app("t", vec![]));
        assert_eq!(env.elaborate(&Formula::atom("t"), &["t".into()]).unwrap(), Formula::atom("t"));
        assert!(decidable_env().elaborate(&Formula::atom("decidable"), &[]).is_err());
    }
}
