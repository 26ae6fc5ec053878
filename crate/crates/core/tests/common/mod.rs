//! Shared by the acceptance harness and the invariant suite: a generator of
//! well-formed documents and a straight-line evaluator used as the oracle.
#![allow(dead_code)]

use std::time::Duration;

use proptest::prelude::*;
use sprover::engine::{start_proof, HintDb, ProofState, TacticAst};
use sprover::kernel::{check_swf, typecheck, EnvEntry, Environment, Formula, PromiseStatus, ProofPromise, Term};
use sprover::stm::{ProofMode, ProverWorker, Session, SessionConfig, SpanRole, SpanStatus};
use sprover::taskqueue::{TaskQueue, Transport};
use sprover::vernac::{chop, parse, parse_str, CommandAst};

pub const ATOMS: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Clone)]
pub enum F {
    Atom(usize),
    True,
    Imp(Box<F>, Box<F>),
    And(Box<F>, Box<F>),
    Or(Box<F>, Box<F>),
}

impl F {
    pub fn render(&self) -> String {
        match self {
            F::Atom(i) => ATOMS[*i % ATOMS.len()].to_string(),
            F::True => "True".into(),
            F::Imp(a, b) => format!("({} -> {})", a.render(), b.render()),
            F::And(a, b) => format!("({} /\\ {})", a.render(), b.render()),
            F::Or(a, b) => format!("({} \\/ {})", a.render(), b.render()),
        }
    }
}

pub fn formula() -> impl Strategy<Value = F> {
    let leaf = prop_oneof![4 => (0..ATOMS.len()).prop_map(F::Atom), 1 => Just(F::True)];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| F::Imp(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| F::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| F::Or(Box::new(a), Box::new(b))),
        ]
    })
}

/// One generated item. Indices pick among earlier items and wrap around.
#[derive(Debug, Clone)]
pub enum Item {
    Axiom(F),
    /// Body shape 0..3: `P /\ True`, `P \/ A`, `True -> P`.
    Definition(u8),
    /// `F -> F` by intro and exact.
    Identity(F),
    /// A conjunction of two axioms.
    Conj(usize, usize),
    /// A disjunction with an axiom on one side.
    Disj(usize, bool),
    /// A definition applied to an axiom's statement, unfolded by hand.
    Unfolded(usize, usize),
    /// Restates an earlier theorem and cites it.
    Cite(usize),
    /// An axiom's statement by `auto`, with a hint given globally or inside
    /// the proof.
    Hinted(usize, bool),
    /// `True /\ (F -> F)`, split and closed with `par: auto`.
    Par(F),
    /// A `Check` or `Print`, on master or inside the next proof.
    Query(usize, bool),
    /// `Hint Unfold` of a definition.
    UnfoldHint(usize),
}

pub fn item() -> impl Strategy<Value = Item> {
    prop_oneof![
        3 => formula().prop_map(Item::Axiom),
        1 => (0u8..3).prop_map(Item::Definition),
        2 => formula().prop_map(Item::Identity),
        2 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Item::Conj(a, b)),
        1 => (any::<usize>(), any::<bool>()).prop_map(|(a, l)| Item::Disj(a, l)),
        2 => (any::<usize>(), any::<usize>()).prop_map(|(d, a)| Item::Unfolded(d, a)),
        1 => any::<usize>().prop_map(Item::Cite),
        1 => (any::<usize>(), any::<bool>()).prop_map(|(a, inside)| Item::Hinted(a, inside)),
        1 => formula().prop_map(Item::Par),
        1 => (any::<usize>(), any::<bool>()).prop_map(|(a, inside)| Item::Query(a, inside)),
        1 => any::<usize>().prop_map(Item::UnfoldHint),
    ]
}

pub fn items() -> impl Strategy<Value = Vec<Item>> {
    proptest::collection::vec(item(), 1..14)
}

/// A rendered document with what the generator knows about it.
#[derive(Debug, Clone)]
pub struct Doc {
    pub text: String,
    /// Theorem names in order.
    pub theorems: Vec<String>,
}

struct Theorem {
    name: String,
    statement: String,
    /// Proof body sentences, without `Proof.` and `Qed.`.
    body: Vec<String>,
}

/// Renders items into a document that checks without errors.
pub fn render(items: &[Item]) -> Doc {
    let mut out = String::new();
    let mut axioms: Vec<(String, String)> = Vec::new();
    let mut defs: Vec<(String, u8)> = Vec::new();
    let mut theorems: Vec<(String, String)> = Vec::new();
    let mut pending_query: Option<String> = None;
    let mut n = 0usize;
    let mut fresh = |p: &str| {
        n += 1;
        format!("{p}{n}")
    };
    let theorem = |out: &mut String, t: Theorem, q: &mut Option<String>, theorems: &mut Vec<(String, String)>| {
        out.push_str(&format!("Theorem {} : {}.\nProof.\n", t.name, t.statement));
        if let Some(query) = q.take() {
            out.push_str(&format!("  {query}\n"));
        }
        for s in &t.body {
            out.push_str(&format!("  {s}\n"));
        }
        out.push_str("Qed.\n");
        theorems.push((t.name, t.statement));
    };
    for it in items {
        match it {
            Item::Axiom(f) => {
                let name = fresh("ax");
                out.push_str(&format!("Axiom {name} : {}.\n", f.render()));
                axioms.push((name, f.render()));
            }
            Item::Definition(shape) => {
                let name = fresh("def");
                let body = ["P /\\ True", "P \\/ A", "True -> P"][*shape as usize % 3];
                out.push_str(&format!("Definition {name} (P : Prop) := {body}.\n"));
                defs.push((name, *shape % 3));
            }
            Item::Identity(f) => {
                let name = fresh("id");
                let s = format!("{} -> {}", f.render(), f.render());
                theorem(
                    &mut out,
                    Theorem { name, statement: s, body: vec!["intro x.".into(), "exact x.".into()] },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Conj(i, j) if !axioms.is_empty() => {
                let (a, fa) = axioms[i % axioms.len()].clone();
                let (b, fb) = axioms[j % axioms.len()].clone();
                let body = vec!["split.".into(), format!("exact {a}."), format!("exact {b}.")];
                theorem(
                    &mut out,
                    Theorem { name: fresh("conj"), statement: format!("{fa} /\\ {fb}"), body },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Disj(i, left) if !axioms.is_empty() => {
                let (a, fa) = axioms[i % axioms.len()].clone();
                let (statement, side) =
                    if *left { (format!("{fa} \\/ B"), "left.") } else { (format!("B \\/ {fa}"), "right.") };
                let body = vec![side.into(), format!("exact {a}.")];
                theorem(&mut out, Theorem { name: fresh("disj"), statement, body }, &mut pending_query, &mut theorems);
            }
            Item::Unfolded(d, i) if !axioms.is_empty() && !defs.is_empty() => {
                let (dn, shape) = defs[d % defs.len()].clone();
                let (a, fa) = axioms[i % axioms.len()].clone();
                let mut body = vec![format!("unfold {dn}.")];
                match shape {
                    0 => body.extend(["split.".to_string(), format!("exact {a}."), "auto.".into()]),
                    1 => body.extend(["left.".to_string(), format!("exact {a}.")]),
                    _ => body.extend(["intro.".to_string(), format!("exact {a}.")]),
                }
                theorem(
                    &mut out,
                    Theorem { name: fresh("unf"), statement: format!("{dn} {fa}"), body },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Cite(i) if !theorems.is_empty() => {
                let (t, s) = theorems[i % theorems.len()].clone();
                theorem(
                    &mut out,
                    Theorem { name: fresh("cite"), statement: s, body: vec![format!("exact {t}.")] },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Hinted(i, inside) if !axioms.is_empty() => {
                let (a, fa) = axioms[i % axioms.len()].clone();
                let hint = format!("Hint Resolve {a}.");
                let body = if *inside {
                    vec![hint, "auto.".into()]
                } else {
                    out.push_str(&format!("{hint}\n"));
                    vec!["auto.".into()]
                };
                theorem(
                    &mut out,
                    Theorem { name: fresh("hinted"), statement: fa, body },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Par(f) => {
                let s = format!("True /\\ ({} -> {})", f.render(), f.render());
                let body = vec!["split.".into(), "par: auto.".into()];
                theorem(
                    &mut out,
                    Theorem { name: fresh("par"), statement: s, body },
                    &mut pending_query,
                    &mut theorems,
                );
            }
            Item::Query(i, inside) => {
                let q = match axioms.get(i % axioms.len().max(1)) {
                    Some((a, _)) if i % 2 == 0 => format!("Print {a}."),
                    Some((_, f)) => format!("Check {f}."),
                    None => "Check True.".into(),
                };
                if *inside {
                    pending_query = Some(q);
                } else {
                    out.push_str(&format!("{q}\n"));
                }
            }
            Item::UnfoldHint(d) if !defs.is_empty() => {
                out.push_str(&format!("Hint Unfold {}.\n", defs[d % defs.len()].0));
            }
            // the item needs something that does not exist yet
            _ => {
                let name = fresh("triv");
                theorem(
                    &mut out,
                    Theorem { name, statement: "True".into(), body: vec!["auto.".into()] },
                    &mut pending_query,
                    &mut theorems,
                );
            }
        }
    }
    Doc { text: out, theorems: theorems.into_iter().map(|(n, _)| n).collect() }
}

/// Faults that only break proof bodies.
pub const FAULTS: [&str; 4] = ["fail.", "exact nowhere.", "apply nowhere.", "right."];

/// Replaces the first tactic line of every selected proof (by index, wrapped)
/// with a fault. Returns the text and, per fault, the 0-based line numbers
/// of the proof's first and last lines (`Theorem` through `Qed`).
pub fn inject_faults(text: &str, picks: &[(usize, usize)]) -> (String, Vec<(usize, usize)>) {
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let starts: Vec<usize> =
        lines.iter().enumerate().filter(|(_, l)| l.starts_with("Theorem ")).map(|(i, _)| i).collect();
    let mut ranges = Vec::new();
    if starts.is_empty() {
        return (text.to_string(), ranges);
    }
    for (p, f) in picks {
        let start = starts[p % starts.len()];
        let end = (start..lines.len()).find(|&i| lines[i] == "Qed.").unwrap();
        if ranges.contains(&(start, end)) {
            continue;
        }
        // first body line after `Proof.`
        lines[start + 2] = format!("  {}", FAULTS[f % FAULTS.len()]);
        ranges.push((start, end));
    }
    let mut out = lines.join("\n");
    out.push('\n');
    (out, ranges)
}

/// Evaluates a document strictly in order with the kernel and the engine
/// alone, the way a one-command-at-a-time toplevel would.
pub fn sequential(text: &str) -> Result<Environment, String> {
    let mut env = Environment::new();
    let mut hints = HintDb::default();
    let mut proof: Option<(String, Formula, ProofState)> = None;
    for span in chop(text) {
        let parsed = parse(&span).map_err(|e| e.to_string())?;
        let err = |e: &dyn std::fmt::Display| format!("{}: {e}", span.text.trim());
        match parsed.ast {
            CommandAst::Definition { name, params, body } => {
                let body = env.elaborate(&body, &params).map_err(|e| err(&e))?;
                env = env.add_definition(&name, params, body).map_err(|e| err(&e))?;
            }
            CommandAst::Axiom { name, statement } => {
                let statement = env.elaborate(&statement, &[]).map_err(|e| err(&e))?;
                env = env.add_axiom(&name, statement).map_err(|e| err(&e))?;
            }
            CommandAst::Theorem { name, statement } => {
                let statement = env.elaborate(&statement, &[]).map_err(|e| err(&e))?;
                let ps = ProofState::start(&env, statement.clone(), hints.clone()).map_err(|e| err(&e))?;
                proof = Some((name, statement, ps));
            }
            CommandAst::Hint { kind, names } => {
                hints.add(&env, kind, &names).map_err(|e| err(&e))?;
                if let Some((_, _, ps)) = &mut proof {
                    ps.hints.add(&env, kind, &names).map_err(|e| err(&e))?;
                }
            }
            CommandAst::Tactic(t) => {
                let (_, _, ps) = proof.as_mut().ok_or("tactic outside a proof")?;
                ps.apply(&env, &t).map_err(|e| err(&e))?;
            }
            CommandAst::Qed => {
                let (name, statement, ps) = proof.take().ok_or("Qed outside a proof")?;
                let term = ps.finish().map_err(|e| err(&e))?;
                typecheck(&env, &[], &term, &statement).map_err(|e| err(&e))?;
                let promise = ProofPromise::finished(statement.clone(), term);
                env = env.add_opaque(&name, statement, promise).map_err(|e| err(&e))?;
            }
            CommandAst::Check(_) | CommandAst::Print(_) => {}
            CommandAst::Require(m) => return Err(format!("no modules here ({m})")),
        }
    }
    Ok(env)
}

/// What structural equality compares: every entry with its evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Definition(String, Vec<String>, Formula),
    Axiom(String, Formula),
    Theorem(String, Formula, Option<Term>),
}

pub fn shape(env: &Environment) -> Vec<Shape> {
    env.entries()
        .map(|e| match e {
            EnvEntry::Definition { name, params, body } => {
                Shape::Definition(name.clone(), params.clone(), body.clone())
            }
            EnvEntry::Axiom { name, statement } => Shape::Axiom(name.clone(), statement.clone()),
            EnvEntry::Opaque { name, statement, promise } => Shape::Theorem(
                name.clone(),
                statement.clone(),
                match &promise.status {
                    PromiseStatus::Finished(t) => Some(t.clone()),
                    _ => None,
                },
            ),
        })
        .collect()
}

pub fn session_with(workers: usize, transport: &Transport) -> Session {
    let mode = if workers == 0 {
        ProofMode::Local
    } else {
        ProofMode::Queue(TaskQueue::new(workers as i64, transport.clone()).expect("queue"))
    };
    Session::new(SessionConfig { mode, ..SessionConfig::default() })
}

pub fn thread_workers() -> Transport {
    Transport::thread(ProverWorker::new)
}

/// Checks `text` in a session and returns its final environment with every
/// promise resolved.
pub fn asynchronous(text: &str, workers: usize, transport: &Transport) -> Option<Environment> {
    let mut s = session_with(workers, transport);
    s.update_text(text);
    s.run(&[]);
    s.wait_idle(Duration::from_secs(60));
    s.environment()
}

/// The par: tactic against one application per goal, in order.
pub fn par_versus_sequential(
    env: &Environment,
    ps: &ProofState,
    t: &TacticAst,
) -> (Result<Term, String>, Result<Term, String>) {
    let mut par = ps.clone();
    let par_result = par
        .apply(env, &TacticAst::Par(Box::new(t.clone())))
        .map_err(|e| e.to_string())
        .and_then(|_| par.finish().map_err(|e| e.to_string()));
    let mut seq = ps.clone();
    let mut seq_result = Ok(());
    for _ in 0..ps.goals.len() {
        let before = seq.goals.len();
        if let Err(e) = seq.apply(env, t) {
            seq_result = Err(e.to_string());
            break;
        }
        if seq.goals.len() != before - 1 {
            seq_result = Err("goal not closed".into());
            break;
        }
    }
    let seq_result = seq_result.and_then(|_| seq.finish().map_err(|e| e.to_string()));
    (par_result, seq_result)
}

/// Well-formedness from first principles: names fresh, formulas closed over
/// earlier definitions with the right arity, and each theorem's evidence a
/// term of its statement in the entries before it.
pub fn wf(env: &Environment) -> bool {
    use std::collections::{HashMap, HashSet};
    fn closed(f: &Formula, defs: &HashMap<String, usize>, bound: &[String]) -> bool {
        match f {
            Formula::Atom(a) => !defs.contains_key(a) || bound.contains(a),
            Formula::True | Formula::False => true,
            Formula::Impl(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
                closed(a, defs, bound) && closed(b, defs, bound)
            }
            Formula::DefApp(d, args) => defs.get(d) == Some(&args.len()) && args.iter().all(|a| closed(a, defs, bound)),
        }
    }
    let mut names = HashSet::new();
    let mut defs = HashMap::new();
    for (i, e) in env.entries().enumerate() {
        if !names.insert(e.name().to_string()) {
            return false;
        }
        match e {
            EnvEntry::Definition { name, params, body } => {
                if !closed(body, &defs, params) {
                    return false;
                }
                defs.insert(name.clone(), params.len());
            }
            EnvEntry::Axiom { statement, .. } => {
                if !closed(statement, &defs, &[]) {
                    return false;
                }
            }
            EnvEntry::Opaque { statement, promise, .. } => {
                if !closed(statement, &defs, &[]) || promise.statement != *statement {
                    return false;
                }
                let PromiseStatus::Finished(t) = &promise.status else { return false };
                if typecheck(&env.prefix(i), &[], t, statement).is_err() {
                    return false;
                }
            }
        }
    }
    true
}

/// Ok, or what went wrong: a master span not processed or a failure outside
/// the faulted proofs.
pub fn fault_report(text: &str, ranges: &[(usize, usize)]) -> Result<(), String> {
    let mut s = session_with(0, &thread_workers());
    s.update_text(text);
    s.run(&s.all_spans());
    let chars: Vec<char> = text.chars().collect();
    let line_of = |offset: usize| chars[..offset].iter().filter(|c| **c == '\n').count();
    for span in s.spans().to_vec() {
        let role = s.dag().role(span.id).cloned();
        let status = s.status(span.id).cloned();
        if matches!(role, Some(SpanRole::Master { .. })) && status != Some(SpanStatus::Processed) {
            return Err(format!("master span `{}` is {status:?}", span.text.trim()));
        }
        if let Some(SpanStatus::Failed { .. }) = status {
            let line = line_of(span.offset);
            if !ranges.iter().any(|(a, b)| *a < line && line < *b) {
                return Err(format!("failure outside a faulty proof: `{}`", span.text.trim()));
            }
        }
    }
    Ok(())
}

/// A multi-goal state: `h.. -> p1 /\ (p2 /\ ..)` after `intros` and as many
/// `split`s as apply to the first goal. Parts flagged `true` are also
/// hypotheses, so some goals close and some do not.
pub fn par_case(parts: &[(F, bool)], tactic: usize) -> (Result<Term, String>, Result<Term, String>) {
    let conj = parts.iter().rev().map(|(f, _)| f.render()).reduce(|acc, f| format!("({f} /\\ {acc})")).unwrap();
    let statement =
        parts.iter().rev().filter(|(_, h)| *h).fold(conj, |acc, (f, _)| format!("({} -> {acc})", f.render()));
    let env = sequential("Axiom ax : A.\nHint Resolve ax.\n").unwrap();
    let CommandAst::Check(goal) = parse_str(&format!("Check {statement}.")).unwrap().ast else { unreachable!() };
    let mut ps = start_proof(&env, goal).unwrap();
    ps.apply(&env, &TacticAst::Intros).unwrap();
    while ps.goals.first().is_some_and(|g| matches!(g.conclusion, Formula::And(..))) {
        ps.apply(&env, &TacticAst::Split).unwrap();
    }
    let t = [TacticAst::Auto(None), TacticAst::Assumption, TacticAst::Exact("h".into())][tactic].clone();
    par_versus_sequential(&env, &ps, &t)
}

pub fn opaques(env: &Environment) -> Vec<(String, Formula)> {
    env.entries()
        .filter_map(|e| match e {
            EnvEntry::Opaque { name, statement, .. } => Some((name.clone(), statement.clone())),
            _ => None,
        })
        .collect()
}

pub fn opacity_holds(env: &Environment, at: usize, how: usize) -> bool {
    let opaque = opaques(env);
    if opaque.is_empty() {
        return true;
    }
    let (name, statement) = opaque[at % opaque.len()].clone();
    let payload = match how {
        0 => ProofPromise::failed(statement.clone(), "swapped"),
        1 => ProofPromise::delegated(statement.clone(), sprover::ids::ExtrudedKey(9), sprover::ids::StateId(9)),
        _ => ProofPromise::finished(statement.clone(), Term::TT),
    };
    let swapped = env.with_promise(&name, payload).unwrap();
    let others = |e: &Environment| -> Vec<String> {
        check_swf(e).err().unwrap_or_default().into_iter().map(|(n, _)| n).filter(|n| *n != name).collect()
    };
    env.check_awf().is_ok() == swapped.check_awf().is_ok() && others(env) == others(&swapped)
}

/// Corrupts an environment through its serialized form, which bypasses the
/// checks of the constructors.
pub fn tampered(env: &Environment, how: usize, at: usize, other: usize) -> Environment {
    let mut v = serde_json::to_value(env).unwrap();
    let entries = v["entries"].as_array_mut().unwrap();
    let n = entries.len();
    if n == 0 {
        return env.clone();
    }
    let (i, j) = (at % n, other % n);
    match how {
        0 => {}
        1 => entries.swap(i, j),
        2 => {
            let e = entries[i].clone();
            entries.insert(j, e);
        }
        3 => {
            // trade evidence between two theorems
            let idx: Vec<usize> = (0..n).filter(|k| entries[*k].get("Opaque").is_some()).collect();
            if idx.len() >= 2 {
                let (a, b) = (idx[i % idx.len()], idx[j % idx.len()]);
                let pa = entries[a]["Opaque"]["promise"]["status"].clone();
                let pb = entries[b]["Opaque"]["promise"]["status"].clone();
                entries[a]["Opaque"]["promise"]["status"] = pb;
                entries[b]["Opaque"]["promise"]["status"] = pa;
            }
        }
        4 => {
            if let Some(o) = entries[i].get_mut("Opaque") {
                o["promise"]["status"] = serde_json::to_value(PromiseStatus::Failed("gone".into())).unwrap();
            }
        }
        _ => {
            entries.remove(i);
        }
    }
    serde_json::from_value(v).unwrap()
}
