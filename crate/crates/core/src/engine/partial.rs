use serde::{Deserialize, Serialize};

use crate::kernel::{Formula, Term};

/// A proof term under construction, with one hole per open goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartialTerm {
    Hole(u32),
    Closed(Term),
    Lam(String, Formula, Box<PartialTerm>),
    App(Box<PartialTerm>, Box<PartialTerm>),
    Pair(Box<PartialTerm>, Box<PartialTerm>),
    Inl(Box<PartialTerm>, Formula),
    Inr(Box<PartialTerm>, Formula),
}

impl PartialTerm {
    /// Replaces hole `id` by `with`. Returns whether the hole was found.
    pub fn fill(&mut self, id: u32, with: PartialTerm) -> bool {
        let mut slot = Some(with);
        self.fill_inner(id, &mut slot);
        slot.is_none()
    }

    fn fill_inner(&mut self, id: u32, slot: &mut Option<PartialTerm>) {
        if slot.is_none() {
            return;
        }
        match self {
            PartialTerm::Hole(h) if *h == id => *self = slot.take().expect("checked above"),
            PartialTerm::Hole(_) | PartialTerm::Closed(_) => {}
            PartialTerm::Lam(_, _, b) | PartialTerm::Inl(b, _) | PartialTerm::Inr(b, _) => b.fill_inner(id, slot),
            PartialTerm::App(a, b) | PartialTerm::Pair(a, b) => {
                a.fill_inner(id, slot);
                b.fill_inner(id, slot);
            }
        }
    }

    /// The closed term, or `None` if a hole remains.
    pub fn to_term(&self) -> Option<Term> {
        Some(match self {
            PartialTerm::Hole(_) => return None,
            PartialTerm::Closed(t) => t.clone(),
            PartialTerm::Lam(x, ty, b) => Term::lam(x.clone(), ty.clone(), b.to_term()?),
            PartialTerm::App(a, b) => Term::app(a.to_term()?, b.to_term()?),
            PartialTerm::Pair(a, b) => Term::pair(a.to_term()?, b.to_term()?),
            PartialTerm::Inl(b, ty) => Term::inl(b.to_term()?, ty.clone()),
            PartialTerm::Inr(b, ty) => Term::inr(b.to_term()?, ty.clone()),
        })
    }

    pub fn holes(&self) -> usize {
        match self {
            PartialTerm::Hole(_) => 1,
            PartialTerm::Closed(_) => 0,
            PartialTerm::Lam(_, _, b) | PartialTerm::Inl(b, _) | PartialTerm::Inr(b, _) => b.holes(),
            PartialTerm::App(a, b) | PartialTerm::Pair(a, b) => a.holes() + b.holes(),
        }
    }
}
