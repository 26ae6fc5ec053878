use super::{fresh_name, unfold_names, HintDb};
use crate::kernel::{Environment, Formula, Term};

/// Depth-bounded backward search.
///
/// At every node the goal is first unfolded with the unfold hints. Rules are
/// tried in a fixed order: closing by `True`, assumption (including ex falso
/// from a `False` hypothesis), then, if depth remains, intro, split, left,
/// right and apply over hypotheses followed by resolve hints. The first
/// witness found in that order is returned.
pub fn auto_search(
    env: &Environment,
    hints: &HintDb,
    hyps: &[(String, Formula)],
    goal: &Formula,
    depth: u32,
) -> Option<Term> {
    let resolve: Vec<(String, Formula)> = hints
        .resolve
        .iter()
        .filter_map(|n| env.get(n).and_then(|e| e.statement()).map(|s| (n.clone(), s.clone())))
        .collect();
    let mut search = Search { env, unfold: &hints.unfold, resolve, nodes: 0 };
    let mut hyps = hyps.to_vec();
    search.run(&mut hyps, goal, depth)
}

struct Search<'a> {
    env: &'a Environment,
    unfold: &'a [String],
    resolve: Vec<(String, Formula)>,
    nodes: u64,
}

impl Search<'_> {
    fn conv(&self, a: &Formula, b: &Formula) -> bool {
        self.env.convertible(a, b).unwrap_or(false)
    }

    fn run(&mut self, hyps: &mut Vec<(String, Formula)>, goal: &Formula, depth: u32) -> Option<Term> {
        self.nodes += 1;
        let goal = unfold_names(self.env, goal, self.unfold);
        if goal == Formula::True {
            return Some(Term::TT);
        }
        if let Some((n, _)) = hyps.iter().find(|(_, h)| self.conv(h, &goal)) {
            return Some(Term::var(n.clone()));
        }
        if let Some((n, _)) = hyps.iter().find(|(_, h)| self.conv(h, &Formula::False)) {
            return Some(Term::exfalso(Term::var(n.clone()), goal));
        }
        if depth == 0 {
            return None;
        }
        let d = depth - 1;
        match &goal {
            Formula::Impl(a, b) => {
                let name = fresh_name(hyps);
                hyps.push((name.clone(), (**a).clone()));
                let body = self.run(hyps, b, d);
                hyps.pop();
                if let Some(body) = body {
                    return Some(Term::lam(name, (**a).clone(), body));
                }
            }
            Formula::And(a, b) => {
                if let Some(ta) = self.run(hyps, a, d) {
                    if let Some(tb) = self.run(hyps, b, d) {
                        return Some(Term::pair(ta, tb));
                    }
                }
            }
            Formula::Or(a, b) => {
                if let Some(t) = self.run(hyps, a, d) {
                    return Some(Term::inl(t, (**b).clone()));
                }
                if let Some(t) = self.run(hyps, b, d) {
                    return Some(Term::inr(t, (**a).clone()));
                }
            }
            _ => {}
        }
        let candidates: Vec<(String, Formula)> = hyps.iter().chain(self.resolve.iter()).cloned().collect();
        for (name, ty) in candidates {
            if let Some(t) = self.apply(hyps, &name, &ty, &goal, d) {
                return Some(t);
            }
        }
        None
    }

    /// Tries `name : A1 -> .. -> An -> C`, using the shortest suffix whose
    /// conclusion matches the goal.
    fn apply(
        &mut self,
        hyps: &mut Vec<(String, Formula)>,
        name: &str,
        ty: &Formula,
        goal: &Formula,
        depth: u32,
    ) -> Option<Term> {
        let mut premises = Vec::new();
        let mut concl = unfold_names(self.env, ty, self.unfold);
        loop {
            if self.conv(&concl, goal) {
                let mut term = Term::var(name);
                for p in &premises {
                    let arg = self.run(hyps, p, depth)?;
                    term = Term::app(term, arg);
                }
                return Some(term);
            }
            match concl {
                Formula::Impl(a, b) => {
                    premises.push(*a);
                    concl = *b;
                }
                _ => return None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec_env() -> Environment {
        let p = Formula::atom("P");
        Environment::new()
            .add_definition("decidable", vec!["P".into()], Formula::or(p.clone(), Formula::negation(p)))
            .unwrap()
    }

    /// Brute-force oracle: enumerates every derivation tree the rule set can
    /// build up to the depth bound, in rule order, and returns the first one.
    /// Shares nothing with the search above beyond the rule list.
    fn enumerate(hyps: &[(String, Formula)], goal: &Formula, depth: u32) -> Vec<Term> {
        let mut out = Vec::new();
        if *goal == Formula::True {
            out.push(Term::TT);
        }
        for (n, h) in hyps {
            if h == goal {
                out.push(Term::var(n.clone()));
            }
        }
        for (n, h) in hyps {
            if *h == Formula::False {
                out.push(Term::exfalso(Term::var(n.clone()), goal.clone()));
            }
        }
        if depth == 0 {
            return out;
        }
        match goal {
            Formula::Impl(a, b) => {
                let names: Vec<&str> = hyps.iter().map(|(n, _)| n.as_str()).collect();
                let name = std::iter::once("h".to_string())
                    .chain((0..).map(|i| format!("h{i}")))
                    .find(|c| !names.contains(&c.as_str()))
                    .unwrap();
                let mut h2 = hyps.to_vec();
                h2.push((name.clone(), (**a).clone()));
                for t in enumerate(&h2, b, depth - 1) {
                    out.push(Term::lam(name.clone(), (**a).clone(), t));
                }
            }
            Formula::Or(a, b) => {
                for t in enumerate(hyps, a, depth - 1) {
                    out.push(Term::inl(t, (**b).clone()));
                }
                for t in enumerate(hyps, b, depth - 1) {
                    out.push(Term::inr(t, (**a).clone()));
                }
            }
            _ => {}
        }
        out
    }

    #[test]
    fn closes_unfolded_decidable_false() {
        let goal = Formula::or(Formula::False, Formula::negation(Formula::False));
        let found = auto_search(&Environment::new(), &HintDb::default(), &[], &goal, 5).unwrap();
        let oracle = enumerate(&[], &goal, 5);
        assert_eq!(found, oracle[0]);
        assert_eq!(found, Term::inr(Term::lam("h", Formula::False, Term::var("h")), Formula::False));
    }

    #[test]
    fn false_is_not_provable() {
        for depth in [0, 1, 5, 9] {
            assert_eq!(auto_search(&Environment::new(), &HintDb::default(), &[], &Formula::False, depth), None);
        }
    }

    #[test]
    fn unfold_hints_enable_search() {
        let env = dec_env();
        let goal = Formula::app("decidable", vec![Formula::False]);
        assert_eq!(auto_search(&env, &HintDb::default(), &[], &goal, 5), None);
        let hints = HintDb { resolve: vec![], unfold: vec!["decidable".into()] };
        let t = auto_search(&env, &hints, &[], &goal, 5).unwrap();
        assert_eq!(crate::kernel::typecheck(&env, &[], &t, &goal), Ok(()));
    }

    #[test]
    fn resolve_hints_are_applied() {
        let (a, b) = (Formula::atom("A"), Formula::atom("B"));
        let env = Environment::new()
            .add_axiom("ab", Formula::imp(a.clone(), b.clone()))
            .unwrap()
            .add_axiom("a", a.clone())
            .unwrap();
        assert_eq!(auto_search(&env, &HintDb::default(), &[], &b, 5), None);
        let hints = HintDb { resolve: vec!["ab".into(), "a".into()], unfold: vec![] };
        let t = auto_search(&env, &hints, &[], &b, 5).unwrap();
        assert_eq!(t, Term::app(Term::var("ab"), Term::var("a")));
    }

    #[test]
    fn depth_bounds_the_search() {
        // A -> B -> A needs two intros
        let (a, b) = (Formula::atom("A"), Formula::atom("B"));
        let goal = Formula::imp(a.clone(), Formula::imp(b, a));
        assert_eq!(auto_search(&Environment::new(), &HintDb::default(), &[], &goal, 1), None);
        assert!(auto_search(&Environment::new(), &HintDb::default(), &[], &goal, 2).is_some());
    }
}
