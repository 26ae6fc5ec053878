//! Small documents used by tests, benchmarks and the command line.

/// A definition and one theorem whose proof unfolds it.
pub const DECIDABLE: &str = "Definition decidable (P : Prop) := P \\/ ~ P.

Theorem dec_False : decidable False.
Proof.
  unfold decidable, not.
  auto.
Qed.
";

/// As [`DECIDABLE`], but the unfolding comes from a hint given inside the
/// proof, which also affects everything after it.
pub const DECIDABLE_HINT: &str = "Definition decidable (P : Prop) := P \\/ ~ P.

Theorem dec_False : decidable False.
Proof.
  Hint Extern 1 => unfold decidable, not.
  auto.
Qed.
";
