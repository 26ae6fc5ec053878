//! The state transaction machine: documents become DAGs of transactions,
//! evaluated on demand and partly delegated to workers.

pub mod dag;
pub mod exec;
pub mod session;
pub mod state;
pub mod tasks;

pub use dag::{build_dag, Dag, Edge, ProofBranch, SpanRole, Transaction, MASTER};
pub use exec::{ImportedEntry, LoadedModule, ModuleLoader, NoModules, Side};
pub use session::{
    Failure, ForceError, Hyperlink, Logged, NodeResult, ProofMode, Session, SessionConfig, SessionEvent, SpanStatus,
    UpdateReport,
};
pub use state::{BranchError, Computation, KeySlot, KeyTable, OpenProof, ProgramStep, PureComputation, SystemState};
pub use tasks::{Base, ProverRequest, ProverResponse, ProverTask, ProverWorker, TaskKind, TaskReport, TaskTag};
