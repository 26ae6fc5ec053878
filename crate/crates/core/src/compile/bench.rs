//! Synthetic workloads: independent theorems whose proofs cost a tunable
//! amount of search, padded with master-side queries.

use std::fmt::Write;
use std::time::Duration;

use super::{check_full, CompileError, CompileOptions};

/// Atoms in one filler query.
pub const FILLER_WIDTH: usize = 48;

/// Measured cost of one filler query, in units of one search node at
/// `auto` depth 0, between the debug and release figures reported by
/// [`calibrate`]. Only ratios matter.
pub const FILLER_COST: f64 = 40.0;

/// Fixed master cost of one theorem (statement, proof skeleton, Qed), in
/// the same units.
pub const THEOREM_COST: f64 = 70.0;

/// Search nodes visited by `intros. auto depth.` on a bench theorem.
pub fn proof_nodes(depth: u32) -> f64 {
    // the goal explores a binary tree of dead ends before the one way out
    (1u64 << (depth + 1)) as f64
}

/// Filler queries per theorem so that proofs take `fraction` of the work.
pub fn fillers_for(depth: u32, fraction: f64) -> usize {
    let proof = proof_nodes(depth);
    let master = proof * (1.0 - fraction) / fraction - THEOREM_COST;
    (master / FILLER_COST).round().max(0.0) as usize
}

fn filler(i: usize, k: usize) -> String {
    let mut f = String::new();
    for j in 0..FILLER_WIDTH {
        let _ = write!(f, "F{} -> ", (i + j + k) % 7);
    }
    f.push_str("True");
    f
}

/// Deterministic source text with `n` independent theorems.
pub fn bench_generate(n: usize, depth: u32, fraction: f64) -> String {
    let fraction = fraction.clamp(0.01, 1.0);
    let mut out = format!("(* bench: {n} theorems, depth {depth}, proof fraction {fraction} *)\n");
    let fillers = fillers_for(depth, fraction);
    for i in 0..n {
        let _ = writeln!(
            out,
            "Theorem bench_{i} : (U1 -> U1) -> (U1 -> U2) -> (U2 -> U1) -> (U2 -> U2) -> (U1 -> C) -> (D -> C) -> D -> C."
        );
        let _ = writeln!(out, "Proof. intros. auto {depth}. Qed.");
        for k in 0..fillers {
            let _ = writeln!(out, "Check {}.", filler(i, k));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measure {
    pub master: Duration,
    pub proofs: Duration,
}

impl Measure {
    pub fn total(&self) -> Duration {
        self.master + self.proofs
    }

    pub fn proof_fraction(&self) -> f64 {
        self.proofs.as_secs_f64() / self.total().as_secs_f64().max(1e-9)
    }
}

/// Checks `text` sequentially in-process, timing master and proof work.
pub fn measure(text: &str) -> Result<Measure, CompileError> {
    let out = check_full("bench", text, &CompileOptions::default(), std::path::Path::new("bench.v"))?;
    Ok(Measure { master: out.timings.master, proofs: out.timings.proofs })
}

/// Re-derives the two cost constants on this machine: (filler cost,
/// theorem cost) in search-node units.
pub fn calibrate() -> Result<(f64, f64), CompileError> {
    let depth = 12;
    let n = 20;
    let time = |text: &str| -> Result<Measure, CompileError> {
        let mut best: Option<Measure> = None;
        for _ in 0..3 {
            let m = measure(text)?;
            if best.is_none_or(|b| m.total() < b.total()) {
                best = Some(m);
            }
        }
        Ok(best.unwrap())
    };
    let bare = time(&bench_generate(n, depth, 1.0))?;
    let unit = bare.proofs.as_secs_f64() / (n as f64 * proof_nodes(depth));
    let theorem = bare.master.as_secs_f64() / n as f64 / unit;
    let per = 50;
    let mut padded = bench_generate(n, depth, 1.0);
    for i in 0..n * per {
        let _ = writeln!(padded, "Check {}.", filler(i, 0));
    }
    let m = time(&padded)?;
    let filler = (m.master.as_secs_f64() - bare.master.as_secs_f64()) / (n * per) as f64 / unit;
    Ok((filler, theorem))
}
