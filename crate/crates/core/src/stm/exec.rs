//! Execution of single transactions and of whole proof branches.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::state::{BranchError, Computation, KeyTable, OpenProof, ProgramStep, SystemState};
use crate::engine::{EngineError, ProofState};
use crate::ids::{SpanId, StateId};
use crate::kernel::{typecheck, EnvEntry, Environment, Formula, ProofPromise};
use crate::vernac::CommandAst;

/// Which side of a duplicated command is being executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Master,
    Branch,
}

/// An entry of a compiled module as seen by an importer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImportedEntry {
    Definition {
        name: String,
        params: Vec<String>,
        body: Formula,
    },
    Axiom {
        name: String,
        statement: Formula,
    },
    /// `request` is present when the proof still has to be run.
    Theorem {
        name: String,
        statement: Formula,
        request: Option<Box<super::tasks::ProverRequest>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedModule {
    pub name: String,
    pub requires: Vec<String>,
    pub entries: Vec<ImportedEntry>,
}

/// Resolves `Require` commands.
pub trait ModuleLoader: Send + Sync {
    fn load(&self, module: &str) -> Result<LoadedModule, String>;
}

/// A loader that knows no module.
#[derive(Debug, Default)]
pub struct NoModules;

impl ModuleLoader for NoModules {
    fn load(&self, module: &str) -> Result<LoadedModule, String> {
        Err(format!("module `{module}` not found"))
    }
}

pub(crate) fn engine_msg(e: EngineError) -> String {
    e.to_string()
}

fn elaborated(env: &Environment, f: &Formula, bound: &[String]) -> Result<Formula, String> {
    env.elaborate(f, bound).map_err(|e| e.to_string())
}

/// Executes every command except `Qed`, which the caller handles since it
/// mints a key. Queries are rejected: they never label an edge.
pub fn execute(
    state: &SystemState,
    command: &CommandAst,
    side: Side,
    loader: &dyn ModuleLoader,
    owner: StateId,
) -> Result<SystemState, String> {
    let mut next = state.clone();
    match command {
        CommandAst::Definition { name, params, body } => {
            let body = elaborated(&state.env, body, params)?;
            next.env = state.env.add_definition(name, params.clone(), body).map_err(|e| e.to_string())?;
        }
        CommandAst::Axiom { name, statement } => {
            let statement = elaborated(&state.env, statement, &[])?;
            next.env = state.env.add_axiom(name, statement).map_err(|e| e.to_string())?;
        }
        CommandAst::Theorem { name, statement } => {
            if state.proof.is_some() {
                return Err("a proof is already in progress".into());
            }
            if state.env.contains(name) {
                return Err(format!("`{name}` is already defined"));
            }
            let statement = elaborated(&state.env, statement, &[])?;
            let ps = ProofState::start(&state.env, statement.clone(), state.hints.clone()).map_err(engine_msg)?;
            next.proof = Some(OpenProof { name: name.clone(), statement, ps });
        }
        CommandAst::Hint { kind, names } => match side {
            Side::Master => next.hints.add(&state.env, *kind, names).map_err(engine_msg)?,
            Side::Branch => {
                let proof = next.proof.as_mut().ok_or("no proof in progress")?;
                proof.ps.hints.add(&state.env, *kind, names).map_err(engine_msg)?;
            }
        },
        CommandAst::Tactic(t) => {
            let proof = next.proof.as_mut().ok_or("no proof in progress")?;
            proof.ps.apply(&state.env, t).map_err(engine_msg)?;
        }
        CommandAst::Require(module) => {
            if side == Side::Branch {
                return Err("`Require` is not allowed inside a proof".into());
            }
            next = require(&next, module, loader, owner)?;
        }
        CommandAst::Qed => return Err("internal: Qed is executed by the session".into()),
        CommandAst::Check(_) | CommandAst::Print(_) => return Err("internal: queries do not label edges".into()),
    }
    Ok(next)
}

/// Loads `module` and, first, whatever it requires that is not loaded yet.
pub fn require(
    state: &SystemState,
    module: &str,
    loader: &dyn ModuleLoader,
    owner: StateId,
) -> Result<SystemState, String> {
    if state.loaded.iter().any(|m| m == module) {
        return Err(format!("module `{module}` is already loaded; its names would clash"));
    }
    let mut next = state.clone();
    load_into(&mut next, module, loader, owner, &mut Vec::new())?;
    Ok(next)
}

fn load_into(
    state: &mut SystemState,
    module: &str,
    loader: &dyn ModuleLoader,
    owner: StateId,
    visiting: &mut Vec<String>,
) -> Result<(), String> {
    if visiting.iter().any(|m| m == module) {
        return Err(format!("cyclic dependency through `{module}`"));
    }
    let m = loader.load(module)?;
    visiting.push(module.to_string());
    for dep in &m.requires {
        if !state.loaded.contains(dep) {
            load_into(state, dep, loader, owner, visiting)?;
        }
    }
    visiting.pop();
    let clash = |e: crate::kernel::KernelError| format!("while loading `{module}`: {e}");
    for entry in m.entries {
        state.env = match entry {
            ImportedEntry::Definition { name, params, body } => state.env.add_definition(&name, params, body),
            ImportedEntry::Axiom { name, statement } => state.env.add_axiom(&name, statement),
            ImportedEntry::Theorem { name, statement, request } => {
                let computation = match request {
                    None => Computation::Imported { module: module.to_string() },
                    Some(request) => Computation::Stored { module: module.to_string(), request },
                };
                let key = state.extruded.mint(owner, computation);
                state.env.add_opaque(
                    &name,
                    statement.clone(),
                    ProofPromise::delegated(statement, key, StateId::INITIAL),
                )
            }
        }
        .map_err(clash)?;
    }
    state.loaded.push(module.to_string());
    Ok(())
}

/// Closes the open proof without running it: the theorem enters the
/// environment with a delegated promise behind a fresh key.
pub fn admit(
    state: &SystemState,
    owner: StateId,
    base: StateId,
    computation: Computation,
) -> Result<SystemState, String> {
    let proof = state.proof.as_ref().ok_or("no proof to close")?;
    let key = state.extruded.mint(owner, computation);
    let mut next = state.clone();
    next.env = state
        .env
        .add_opaque(&proof.name, proof.statement.clone(), ProofPromise::delegated(proof.statement.clone(), key, base))
        .map_err(|e| e.to_string())?;
    next.proof = None;
    Ok(next)
}

/// Runs a proof branch from its base state and checks the resulting term.
/// The final state is discarded; only the term survives.
pub fn run_program(
    base: &SystemState,
    program: &[ProgramStep],
    produces: &Formula,
    theorem_span: SpanId,
    on_step: impl FnMut(&ProgramStep, &SystemState),
) -> Result<crate::kernel::Term, BranchError> {
    let blame = program.last().map_or(theorem_span, |s| s.span);
    run_steps(base, program, produces, blame, on_step)
}

/// Runs the rest of a branch from an intermediate state. `blame` is the span
/// held responsible for open goals or a bad term.
pub fn run_steps(
    base: &SystemState,
    program: &[ProgramStep],
    produces: &Formula,
    blame: SpanId,
    mut on_step: impl FnMut(&ProgramStep, &SystemState),
) -> Result<crate::kernel::Term, BranchError> {
    let mut state = SystemState { extruded: KeyTable::new(), ..base.clone() };
    for step in program {
        state = execute(&state, &step.command, Side::Branch, &NoModules, StateId::INITIAL)
            .map_err(|message| BranchError { span: step.span, message })?;
        on_step(step, &state);
    }
    let last = blame;
    let proof =
        state.proof.as_ref().ok_or_else(|| BranchError { span: last, message: "no proof in progress".into() })?;
    let term = proof.ps.finish().map_err(|e| BranchError { span: last, message: e.to_string() })?;
    typecheck(&state.env, &[], &term, produces)
        .map_err(|e| BranchError { span: last, message: format!("the proof term does not check: {e}") })?;
    Ok(term)
}

/// Output of `Check` and `Print`.
pub fn run_query(state: &SystemState, command: &CommandAst) -> Result<String, String> {
    match command {
        CommandAst::Check(f) => {
            let f = elaborated(&state.env, f, &[])?;
            state.env.check_formula(&f).map_err(|e| e.to_string())?;
            Ok(format!("{f} : Prop"))
        }
        CommandAst::Print(name) => {
            let entry = state.env.get(name).ok_or_else(|| format!("unknown name `{name}`"))?;
            let mut out = String::new();
            match entry {
                EnvEntry::Definition { name, params, body } => {
                    write!(out, "Definition {name}").ok();
                    if !params.is_empty() {
                        write!(out, " ({} : Prop)", params.join(" ")).ok();
                    }
                    write!(out, " := {body}").ok();
                }
                EnvEntry::Axiom { name, statement } => {
                    write!(out, "Axiom {name} : {statement}").ok();
                }
                EnvEntry::Opaque { name, statement, .. } => {
                    write!(out, "Theorem {name} : {statement} (opaque)").ok();
                }
            }
            Ok(out)
        }
        other => Err(format!("not a query: {other:?}")),
    }
}
