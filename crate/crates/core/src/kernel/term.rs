use std::fmt;

use serde::{Deserialize, Serialize};

use super::Formula;

/// Proof terms of intuitionistic propositional natural deduction.
///
/// Injections and ex-falso carry the formula that cannot be inferred from
/// their argument, so checking stays syntax directed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Lam(String, Formula, Box<Term>),
    App(Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    Fst(Box<Term>),
    Snd(Box<Term>),
    /// Left injection; the formula is the right disjunct.
    Inl(Box<Term>, Formula),
    /// Right injection; the formula is the left disjunct.
    Inr(Box<Term>, Formula),
    Case(Box<Term>, String, Box<Term>, String, Box<Term>),
    TT,
    Exfalso(Box<Term>, Formula),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn lam(name: impl Into<String>, ty: Formula, body: Term) -> Term {
        Term::Lam(name.into(), ty, Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    pub fn inl(t: Term, right: Formula) -> Term {
        Term::Inl(Box::new(t), right)
    }

    pub fn inr(t: Term, left: Formula) -> Term {
        Term::Inr(Box::new(t), left)
    }

    pub fn exfalso(t: Term, goal: Formula) -> Term {
        Term::Exfalso(Box::new(t), goal)
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::TT => 1,
            Term::Lam(_, _, b) | Term::Fst(b) | Term::Snd(b) => 1 + b.size(),
            Term::Inl(b, _) | Term::Inr(b, _) | Term::Exfalso(b, _) => 1 + b.size(),
            Term::App(a, b) | Term::Pair(a, b) => 1 + a.size() + b.size(),
            Term::Case(s, _, l, _, r) => 1 + s.size() + l.size() + r.size(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(x) => write!(f, "{x}"),
            Term::Lam(x, ty, b) => write!(f, "(fun {x} : {ty} => {b})"),
            Term::App(a, b) => write!(f, "({a} {b})"),
            Term::Pair(a, b) => write!(f, "<{a}, {b}>"),
            Term::Fst(t) => write!(f, "fst {t}"),
            Term::Snd(t) => write!(f, "snd {t}"),
            Term::Inl(t, ty) => write!(f, "inl[{ty}] {t}"),
            Term::Inr(t, ty) => write!(f, "inr[{ty}] {t}"),
            Term::Case(s, x, l, y, r) => write!(f, "(case {s} of {x} => {l} | {y} => {r})"),
            Term::TT => write!(f, "I"),
            Term::Exfalso(t, ty) => write!(f, "(exfalso[{ty}] {t})"),
        }
    }
}
