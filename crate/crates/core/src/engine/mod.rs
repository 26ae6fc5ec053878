//! Goals, tactics and proof search.

mod auto;
mod partial;

pub use auto::auto_search;
pub use partial::PartialTerm;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{EnvEntry, Environment, Formula, KernelError, Term};
use crate::vernac::HintKind;

pub const DEFAULT_AUTO_DEPTH: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TacticAst {
    Intro(Option<String>),
    Intros,
    Apply(String),
    Exact(String),
    Split,
    Left,
    Right,
    Assumption,
    Unfold(Vec<String>),
    Auto(Option<u32>),
    Idtac,
    Fail,
    /// The `Proof.` sentence.
    ProofMarker,
    Par(Box<TacticAst>),
}

impl fmt::Display for TacticAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TacticAst::Intro(None) => write!(f, "intro"),
            TacticAst::Intro(Some(n)) => write!(f, "intro {n}"),
            TacticAst::Intros => write!(f, "intros"),
            TacticAst::Apply(n) => write!(f, "apply {n}"),
            TacticAst::Exact(n) => write!(f, "exact {n}"),
            TacticAst::Split => write!(f, "split"),
            TacticAst::Left => write!(f, "left"),
            TacticAst::Right => write!(f, "right"),
            TacticAst::Assumption => write!(f, "assumption"),
            TacticAst::Unfold(ns) => write!(f, "unfold {}", ns.join(", ")),
            TacticAst::Auto(None) => write!(f, "auto"),
            TacticAst::Auto(Some(d)) => write!(f, "auto {d}"),
            TacticAst::Idtac => write!(f, "idtac"),
            TacticAst::Fail => write!(f, "fail"),
            TacticAst::ProofMarker => write!(f, "Proof"),
            TacticAst::Par(t) => write!(f, "par: {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EngineError {
    #[error("no goals left")]
    NoGoals,
    #[error("{tactic}: {reason}")]
    NotApplicable { tactic: String, reason: String },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("tactic failed")]
    Failed,
    #[error("auto: no proof found within depth {0}")]
    AutoFailed(u32),
    #[error("par: goal {index} not closed: {reason}")]
    ParGoal { index: usize, reason: String },
    #[error("{} open goal{}", .0, if *.0 == 1 { "" } else { "s" })]
    OpenGoals(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintDb {
    pub resolve: Vec<String>,
    pub unfold: Vec<String>,
}

impl HintDb {
    /// Registers hints after checking that every name can serve as one.
    pub fn add(&mut self, env: &Environment, kind: HintKind, names: &[String]) -> Result<(), EngineError> {
        for n in names {
            match (kind, env.get(n)) {
                (HintKind::Unfold, _) if n == "not" => {}
                (HintKind::Unfold, Some(EnvEntry::Definition { .. })) => {}
                (HintKind::Resolve, Some(EnvEntry::Axiom { .. } | EnvEntry::Opaque { .. })) => {}
                (_, None) => return Err(EngineError::UnknownName(n.clone())),
                (_, Some(_)) => {
                    return Err(EngineError::NotApplicable {
                        tactic: "Hint".into(),
                        reason: format!("`{n}` cannot be used as a {kind:?} hint"),
                    })
                }
            }
        }
        let list = match kind {
            HintKind::Resolve => &mut self.resolve,
            HintKind::Unfold => &mut self.unfold,
        };
        for n in names {
            if !list.contains(n) {
                list.push(n.clone());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub hyps: Vec<(String, Formula)>,
    pub conclusion: Formula,
}

impl Goal {
    fn hyp(&self, name: &str) -> Option<&Formula> {
        self.hyps.iter().rev().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, h) in &self.hyps {
            writeln!(f, "{n} : {h}")?;
        }
        writeln!(f, "============================")?;
        write!(f, "{}", self.conclusion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofState {
    pub statement: Formula,
    pub goals: Vec<Goal>,
    /// Hole ids, parallel to `goals`.
    holes: Vec<u32>,
    proof: PartialTerm,
    next_hole: u32,
    pub hints: HintDb,
}

/// First name of `h, h0, h1, ..` not taken by a hypothesis.
pub(crate) fn fresh_name(hyps: &[(String, Formula)]) -> String {
    let taken = |c: &str| hyps.iter().any(|(n, _)| n == c);
    if !taken("h") {
        return "h".into();
    }
    (0..).map(|i| format!("h{i}")).find(|c| !taken(c)).expect("infinitely many candidates")
}

/// Unfolds every application of the listed definitions, repeatedly.
pub(crate) fn unfold_names(env: &Environment, f: &Formula, names: &[String]) -> Formula {
    if names.is_empty() {
        return f.clone();
    }
    let go = |g: &Formula| unfold_names(env, g, names);
    match f {
        Formula::Atom(_) | Formula::True | Formula::False => f.clone(),
        Formula::Impl(a, b) => Formula::imp(go(a), go(b)),
        Formula::And(a, b) => Formula::and(go(a), go(b)),
        Formula::Or(a, b) => Formula::or(go(a), go(b)),
        Formula::DefApp(d, args) => {
            let args: Vec<Formula> = args.iter().map(go).collect();
            match env.definition(d) {
                Some((params, body)) if names.contains(d) && params.len() == args.len() => {
                    go(&body.subst(params, &args))
                }
                _ => Formula::DefApp(d.clone(), args),
            }
        }
    }
}

fn not_applicable(tactic: &TacticAst, reason: impl Into<String>) -> EngineError {
    EngineError::NotApplicable { tactic: tactic.to_string(), reason: reason.into() }
}

impl ProofState {
    pub fn start(env: &Environment, statement: Formula, hints: HintDb) -> Result<ProofState, EngineError> {
        env.check_formula(&statement)?;
        Ok(Self::for_goal(Goal { hyps: Vec::new(), conclusion: statement }, hints))
    }

    fn for_goal(goal: Goal, hints: HintDb) -> ProofState {
        ProofState {
            statement: goal.conclusion.clone(),
            goals: vec![goal],
            holes: vec![0],
            proof: PartialTerm::Hole(0),
            next_hole: 1,
            hints,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.goals.is_empty()
    }

    fn new_hole(&mut self) -> (u32, PartialTerm) {
        let h = self.next_hole;
        self.next_hole += 1;
        (h, PartialTerm::Hole(h))
    }

    /// Replaces the first goal by `new_goals`, filling its hole with `fragment`.
    fn refine(&mut self, fragment: PartialTerm, new_goals: Vec<(u32, Goal)>) {
        let hole = self.holes.remove(0);
        self.goals.remove(0);
        let filled = self.proof.fill(hole, fragment);
        debug_assert!(filled);
        for (i, (h, g)) in new_goals.into_iter().enumerate() {
            self.holes.insert(i, h);
            self.goals.insert(i, g);
        }
    }

    /// The closed proof term once every goal is solved.
    pub fn finish(&self) -> Result<Term, EngineError> {
        if !self.goals.is_empty() {
            return Err(EngineError::OpenGoals(self.goals.len()));
        }
        self.proof.to_term().ok_or(EngineError::OpenGoals(self.proof.holes()))
    }

    pub fn render_goals(&self) -> String {
        let mut out = match self.goals.len() {
            0 => return "No more goals.".into(),
            1 => "1 goal\n".to_string(),
            n => format!("{n} goals\n"),
        };
        out.push_str(&self.goals[0].to_string());
        for (i, g) in self.goals.iter().enumerate().skip(1) {
            out.push_str(&format!("\ngoal {} is:\n{}", i + 1, g.conclusion));
        }
        out
    }

    /// Splits a `par:` step into one independent job per open goal.
    pub fn par_split(&self, tactic: &TacticAst) -> Vec<(Goal, TacticAst)> {
        self.goals.iter().map(|g| (g.clone(), tactic.clone())).collect()
    }

    /// Fills every open goal with the matching witness from a `par:` step.
    pub fn par_join(&mut self, witnesses: Vec<Term>) -> Result<(), EngineError> {
        if witnesses.len() != self.goals.len() {
            return Err(EngineError::OpenGoals(self.goals.len()));
        }
        for (hole, w) in self.holes.drain(..).zip(witnesses) {
            self.proof.fill(hole, PartialTerm::Closed(w));
        }
        self.goals.clear();
        Ok(())
    }

    pub fn apply(&mut self, env: &Environment, tactic: &TacticAst) -> Result<(), EngineError> {
        match tactic {
            TacticAst::Idtac | TacticAst::ProofMarker => return Ok(()),
            TacticAst::Fail => return Err(EngineError::Failed),
            TacticAst::Par(inner) => {
                let jobs = self.par_split(inner);
                let mut witnesses = Vec::with_capacity(jobs.len());
                for (index, (goal, t)) in jobs.into_iter().enumerate() {
                    let w = solve_goal(env, &self.hints, goal, &t)
                        .map_err(|e| EngineError::ParGoal { index, reason: e.to_string() })?;
                    witnesses.push(w);
                }
                return self.par_join(witnesses);
            }
            _ => {}
        }
        let goal = self.goals.first().cloned().ok_or(EngineError::NoGoals)?;
        match tactic {
            TacticAst::Intro(name) => self.intro(tactic, &goal, name.clone()),
            TacticAst::Intros => {
                while matches!(self.goals.first(), Some(Goal { conclusion: Formula::Impl(..), .. })) {
                    let g = self.goals[0].clone();
                    self.intro(tactic, &g, None)?;
                }
                Ok(())
            }
            TacticAst::Split => match &goal.conclusion {
                Formula::And(a, b) => {
                    let (ha, pa) = self.new_hole();
                    let (hb, pb) = self.new_hole();
                    let ga = Goal { hyps: goal.hyps.clone(), conclusion: (**a).clone() };
                    let gb = Goal { hyps: goal.hyps.clone(), conclusion: (**b).clone() };
                    self.refine(PartialTerm::Pair(Box::new(pa), Box::new(pb)), vec![(ha, ga), (hb, gb)]);
                    Ok(())
                }
                _ => Err(not_applicable(tactic, "goal is not a conjunction")),
            },
            TacticAst::Left | TacticAst::Right => match &goal.conclusion {
                Formula::Or(a, b) => {
                    let (h, p) = self.new_hole();
                    let (fragment, sub) = if *tactic == TacticAst::Left {
                        (PartialTerm::Inl(Box::new(p), (**b).clone()), a)
                    } else {
                        (PartialTerm::Inr(Box::new(p), (**a).clone()), b)
                    };
                    let g = Goal { hyps: goal.hyps.clone(), conclusion: (**sub).clone() };
                    self.refine(fragment, vec![(h, g)]);
                    Ok(())
                }
                _ => Err(not_applicable(tactic, "goal is not a disjunction")),
            },
            TacticAst::Exact(name) => {
                let ty = match (goal.hyp(name), env.get(name)) {
                    (Some(f), _) => f.clone(),
                    (None, Some(e)) if e.statement().is_some() => e.statement().cloned().unwrap_or(Formula::True),
                    (None, _) if name == "I" => {
                        if env.convertible(&goal.conclusion, &Formula::True)? {
                            self.refine(PartialTerm::Closed(Term::TT), vec![]);
                            return Ok(());
                        }
                        return Err(not_applicable(tactic, "goal is not `True`"));
                    }
                    _ => return Err(EngineError::UnknownName(name.clone())),
                };
                if env.convertible(&ty, &goal.conclusion)? {
                    self.refine(PartialTerm::Closed(Term::var(name.clone())), vec![]);
                    Ok(())
                } else {
                    Err(not_applicable(tactic, format!("`{name}` has type {ty}, expected {}", goal.conclusion)))
                }
            }
            TacticAst::Apply(name) => {
                let ty = match (goal.hyp(name), env.get(name).and_then(|e| e.statement())) {
                    (Some(f), _) | (None, Some(f)) => f.clone(),
                    _ => return Err(EngineError::UnknownName(name.clone())),
                };
                let mut premises = Vec::new();
                let mut concl = ty.clone();
                loop {
                    if env.convertible(&concl, &goal.conclusion)? {
                        break;
                    }
                    match concl {
                        Formula::Impl(a, b) => {
                            premises.push(*a);
                            concl = *b;
                        }
                        _ => return Err(not_applicable(tactic, format!("cannot unify {ty} with {}", goal.conclusion))),
                    }
                }
                let mut fragment = PartialTerm::Closed(Term::var(name.clone()));
                let mut new_goals = Vec::new();
                for p in premises {
                    let (h, hole) = self.new_hole();
                    fragment = PartialTerm::App(Box::new(fragment), Box::new(hole));
                    new_goals.push((h, Goal { hyps: goal.hyps.clone(), conclusion: p }));
                }
                self.refine(fragment, new_goals);
                Ok(())
            }
            TacticAst::Assumption => {
                for (n, h) in &goal.hyps {
                    if env.convertible(h, &goal.conclusion)? {
                        self.refine(PartialTerm::Closed(Term::var(n.clone())), vec![]);
                        return Ok(());
                    }
                }
                for (n, h) in &goal.hyps {
                    if env.convertible(h, &Formula::False)? {
                        let t = Term::exfalso(Term::var(n.clone()), goal.conclusion.clone());
                        self.refine(PartialTerm::Closed(t), vec![]);
                        return Ok(());
                    }
                }
                Err(not_applicable(tactic, "no matching hypothesis"))
            }
            TacticAst::Unfold(names) => {
                for n in names {
                    // negation is already an implication
                    if n != "not" && env.definition(n).is_none() {
                        return Err(EngineError::UnknownName(n.clone()));
                    }
                }
                self.goals[0].conclusion = unfold_names(env, &goal.conclusion, names);
                Ok(())
            }
            TacticAst::Auto(depth) => {
                let depth = depth.unwrap_or(DEFAULT_AUTO_DEPTH);
                let t = auto_search(env, &self.hints, &goal.hyps, &goal.conclusion, depth)
                    .ok_or(EngineError::AutoFailed(depth))?;
                self.refine(PartialTerm::Closed(t), vec![]);
                Ok(())
            }
            TacticAst::Idtac | TacticAst::ProofMarker | TacticAst::Fail | TacticAst::Par(_) => {
                unreachable!()
            }
        }
    }

    fn intro(&mut self, tactic: &TacticAst, goal: &Goal, name: Option<String>) -> Result<(), EngineError> {
        let Formula::Impl(a, b) = &goal.conclusion else {
            return Err(not_applicable(tactic, "goal is not an implication"));
        };
        let name = name.unwrap_or_else(|| fresh_name(&goal.hyps));
        if goal.hyp(&name).is_some() {
            return Err(not_applicable(tactic, format!("`{name}` is already used")));
        }
        let (h, p) = self.new_hole();
        let mut hyps = goal.hyps.clone();
        hyps.push((name.clone(), (**a).clone()));
        self.refine(
            PartialTerm::Lam(name, (**a).clone(), Box::new(p)),
            vec![(h, Goal { hyps, conclusion: (**b).clone() })],
        );
        Ok(())
    }
}

pub fn start_proof(env: &Environment, statement: Formula) -> Result<ProofState, EngineError> {
    ProofState::start(env, statement, HintDb::default())
}

pub fn apply_tactic(env: &Environment, ps: &ProofState, tactic: &TacticAst) -> Result<ProofState, EngineError> {
    let mut next = ps.clone();
    next.apply(env, tactic)?;
    Ok(next)
}

pub fn finish_proof(ps: &ProofState) -> Result<Term, EngineError> {
    ps.finish()
}

/// Runs `tactic` on a lone goal, which it must close. The witness may mention
/// the goal's hypotheses.
pub fn solve_goal(env: &Environment, hints: &HintDb, goal: Goal, tactic: &TacticAst) -> Result<Term, EngineError> {
    let mut ps = ProofState::for_goal(goal, hints.clone());
    ps.apply(env, tactic)?;
    ps.finish()
}
