use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::cancel::CancelSwitch;
use crate::digest::Digest;
use crate::ids::{SpanId, StateId};
use crate::vernac::{classify, Classification, CommandAst, Span};

use super::state::ProgramStep;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    /// `None` for the edge linking a `Qed` node to its branch tip.
    pub label: Option<CommandAst>,
    pub span: Option<SpanId>,
    /// Set on the master copy of a global command issued inside a proof.
    pub twin_of: Option<SpanId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: StateId,
    pub to: StateId,
    pub tx: Transaction,
}

#[derive(Debug, Clone)]
pub struct ProofBranch {
    pub name: String,
    pub theorem_span: SpanId,
    pub root: StateId,
    pub tip: StateId,
    pub qed: Option<StateId>,
    pub qed_span: Option<SpanId>,
    /// Spans strictly between the theorem and the `Qed`, broken ones included.
    pub spans: Vec<SpanId>,
    pub program: Vec<ProgramStep>,
    /// Fingerprint of the tip: covers the statement and every branch command.
    pub fingerprint: Digest,
    pub cancel: CancelSwitch,
}

/// What a span turned into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpanRole {
    /// A command on master producing `node`; `Theorem` and `Qed` included.
    Master { node: StateId },
    /// A command on proof branch `branch` producing `node`.
    Branch { branch: usize, node: StateId },
    /// A global command inside a proof: on the branch and, as a twin, on master.
    Twin { branch: usize, node: StateId, twin: StateId },
    /// A query evaluated in `anchor`; creates no node.
    Query { anchor: StateId, command: CommandAst, branch: Option<usize> },
    /// Rejected while building the DAG.
    Failed { message: String, branch: Option<usize> },
}

#[derive(Debug, Clone, Default)]
pub struct Dag {
    pub nodes: BTreeSet<StateId>,
    pub edges: Vec<Edge>,
    /// Tips by branch name; master is `"master"`.
    pub branches: BTreeMap<String, StateId>,
    pub master_tip: StateId,
    pub proofs: Vec<ProofBranch>,
    /// Every span of the document, in order.
    pub spans: Vec<(SpanId, SpanRole)>,
    pub fingerprints: HashMap<StateId, Digest>,
    /// Nodes that belong to proof branches rather than to master.
    pub branch_nodes: BTreeSet<StateId>,
    parent: HashMap<StateId, usize>,
}

pub const MASTER: &str = "master";

impl Dag {
    pub fn labeled_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.tx.label.is_some())
    }

    pub fn unlabeled_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.tx.label.is_none())
    }

    /// The labeled edge entering `node`.
    pub fn parent_edge(&self, node: StateId) -> Option<&Edge> {
        self.parent.get(&node).map(|&i| &self.edges[i])
    }

    /// Labeled edges from the initial state to `target`, in order.
    pub fn path_to(&self, target: StateId) -> Vec<&Edge> {
        let mut path = Vec::new();
        let mut cur = target;
        while let Some(e) = self.parent_edge(cur) {
            path.push(e);
            cur = e.from;
        }
        path.reverse();
        path
    }

    pub fn role(&self, span: SpanId) -> Option<&SpanRole> {
        self.spans.iter().find(|(s, _)| *s == span).map(|(_, r)| r)
    }

    pub fn index_of(&self, span: SpanId) -> Option<usize> {
        self.spans.iter().position(|(s, _)| *s == span)
    }

    /// Nodes on master, in order, ending at the master tip.
    pub fn master_nodes(&self) -> Vec<StateId> {
        let mut out: Vec<StateId> = self.path_to(self.master_tip).iter().map(|e| e.to).collect();
        out.insert(0, StateId::INITIAL);
        out
    }

    /// The span whose command labels the edge entering `node`.
    pub fn span_of(&self, node: StateId) -> Option<SpanId> {
        self.parent_edge(node).and_then(|e| e.tx.span)
    }

    /// The proof branch whose `Qed` produced `node`.
    pub fn branch_of_qed(&self, node: StateId) -> Option<&ProofBranch> {
        self.proofs.iter().find(|p| p.qed == Some(node))
    }

    /// Text rendering for debugging and golden tests.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let label = match (&e.tx.label, e.tx.twin_of) {
                (None, _) => "(unlabeled)".to_string(),
                (Some(c), Some(_)) => format!("{c:?} (twin)"),
                (Some(c), None) => format!("{c:?}"),
            };
            out.push_str(&format!("{} -> {}: {label}\n", e.from, e.to));
        }
        out
    }
}

/// One span of input as seen by the DAG builder.
pub struct Input<'a> {
    pub span: &'a Span,
    pub parsed: Result<&'a CommandAst, String>,
}

struct Open {
    index: usize,
    tip_fp: Digest,
}

/// Builds the DAG. `id_for` maps a node fingerprint to its identifier, which
/// lets a session keep identifiers of nodes whose history is unchanged.
pub fn build_dag(inputs: &[Input<'_>], id_for: &mut dyn FnMut(&Digest) -> StateId) -> Dag {
    let mut dag = Dag::default();
    dag.nodes.insert(StateId::INITIAL);
    dag.fingerprints.insert(StateId::INITIAL, Digest::ZERO);
    let mut master_fp = Digest::ZERO;
    let mut open: Option<Open> = None;

    let mut add = |dag: &mut Dag, from: StateId, fp: Digest, tx: Transaction| -> StateId {
        let to = id_for(&fp);
        dag.nodes.insert(to);
        dag.fingerprints.insert(to, fp);
        if tx.label.is_some() {
            dag.parent.insert(to, dag.edges.len());
        }
        dag.edges.push(Edge { from, to, tx });
        to
    };

    for input in inputs {
        let sid = input.span.id;
        let text = input.span.text.as_str();
        let in_branch = open.as_ref().map(|o| o.index);
        let cmd = match &input.parsed {
            Ok(c) => *c,
            Err(message) => {
                if let Some(i) = in_branch {
                    dag.proofs[i].spans.push(sid);
                }
                dag.spans.push((sid, SpanRole::Failed { message: message.clone(), branch: in_branch }));
                continue;
            }
        };
        let fail = |dag: &mut Dag, message: &str| {
            if let Some(i) = in_branch {
                dag.proofs[i].spans.push(sid);
            }
            dag.spans.push((sid, SpanRole::Failed { message: message.into(), branch: in_branch }));
        };
        let labeled = |span| Transaction { label: Some(cmd.clone()), span: Some(span), twin_of: None };
        match (classify(cmd), open.as_mut()) {
            (Classification::Global, None) => {
                master_fp = Digest::chain("master", &master_fp, text);
                dag.master_tip = {
                    let t = dag.master_tip;
                    add(&mut dag, t, master_fp, labeled(sid))
                };
                dag.spans.push((sid, SpanRole::Master { node: dag.master_tip }));
            }
            (Classification::Global, Some(_)) if matches!(cmd, CommandAst::Require(_)) => {
                fail(&mut dag, "`Require` is not allowed inside a proof");
            }
            (Classification::Global, Some(o)) => {
                let p = &mut dag.proofs[o.index];
                let tip = p.tip;
                o.tip_fp = Digest::chain("branch", &o.tip_fp, text);
                let node = add(&mut dag, tip, o.tip_fp, labeled(sid));
                dag.branch_nodes.insert(node);
                master_fp = Digest::chain("twin", &master_fp, text);
                let twin_tx = Transaction { label: Some(cmd.clone()), span: Some(sid), twin_of: Some(sid) };
                let twin = {
                    let t = dag.master_tip;
                    add(&mut dag, t, master_fp, twin_tx)
                };
                dag.master_tip = twin;
                let p = &mut dag.proofs[o.index];
                p.tip = node;
                p.spans.push(sid);
                p.program.push(ProgramStep { span: sid, command: cmd.clone() });
                dag.spans.push((sid, SpanRole::Twin { branch: o.index, node, twin }));
            }
            (Classification::Branch, Some(_)) => {
                fail(&mut dag, "nested proofs are not supported; close the current one first")
            }
            (Classification::Branch, None) => {
                master_fp = Digest::chain("master", &master_fp, text);
                let node = {
                    let t = dag.master_tip;
                    add(&mut dag, t, master_fp, labeled(sid))
                };
                dag.master_tip = node;
                let name = match cmd {
                    CommandAst::Theorem { name, .. } => name.clone(),
                    _ => unreachable!("only theorems open branches"),
                };
                dag.proofs.push(ProofBranch {
                    name,
                    theorem_span: sid,
                    root: node,
                    tip: node,
                    qed: None,
                    qed_span: None,
                    spans: Vec::new(),
                    program: Vec::new(),
                    fingerprint: master_fp,
                    cancel: CancelSwitch::new(),
                });
                open = Some(Open { index: dag.proofs.len() - 1, tip_fp: master_fp });
                dag.spans.push((sid, SpanRole::Master { node }));
            }
            (Classification::Tactic, None) => fail(&mut dag, "no proof in progress"),
            (Classification::Tactic, Some(o)) => {
                let tip = dag.proofs[o.index].tip;
                o.tip_fp = Digest::chain("branch", &o.tip_fp, text);
                let node = add(&mut dag, tip, o.tip_fp, labeled(sid));
                dag.branch_nodes.insert(node);
                let p = &mut dag.proofs[o.index];
                p.tip = node;
                p.spans.push(sid);
                p.program.push(ProgramStep { span: sid, command: cmd.clone() });
                dag.spans.push((sid, SpanRole::Branch { branch: o.index, node }));
            }
            (Classification::Merge, None) => fail(&mut dag, "no proof to close"),
            (Classification::Merge, Some(o)) => {
                // the Qed node depends on master history only, never on proof text
                master_fp = Digest::chain("qed", &master_fp, text);
                let qed = {
                    let t = dag.master_tip;
                    add(&mut dag, t, master_fp, labeled(sid))
                };
                let p = &mut dag.proofs[o.index];
                let tip = p.tip;
                p.qed = Some(qed);
                p.qed_span = Some(sid);
                p.fingerprint = o.tip_fp;
                dag.edges.push(Edge {
                    from: qed,
                    to: tip,
                    tx: Transaction { label: None, span: Some(sid), twin_of: None },
                });
                dag.master_tip = qed;
                dag.spans.push((sid, SpanRole::Master { node: qed }));
                open = None;
            }
            (Classification::Query, _) => {
                dag.spans
                    .push((sid, SpanRole::Query { anchor: dag.master_tip, command: cmd.clone(), branch: in_branch }));
                if let Some(i) = in_branch {
                    dag.proofs[i].spans.push(sid);
                }
            }
        }
    }
    if let Some(o) = open {
        let p = &mut dag.proofs[o.index];
        p.fingerprint = o.tip_fp;
        let sid = p.theorem_span;
        if let Some(entry) = dag.spans.iter_mut().find(|(s, _)| *s == sid) {
            entry.1 = SpanRole::Failed { message: "proof not closed: missing `Qed`".into(), branch: None };
        }
    }
    dag.branches.insert(MASTER.into(), dag.master_tip);
    for p in &dag.proofs {
        dag.branches.insert(p.name.clone(), p.tip);
    }
    dag
}

/// Identifier allocation for a fresh DAG: document order from 1.
pub fn sequential_ids() -> impl FnMut(&Digest) -> StateId {
    let mut next = 0;
    move |_| {
        next += 1;
        StateId(next)
    }
}
