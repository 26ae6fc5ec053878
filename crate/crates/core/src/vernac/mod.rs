//! The command language: sentence chopping, parsing and the classification
//! that drives construction of the state DAG.

mod chop;
mod lexer;
mod parser;

pub use chop::{chop, chop_with_ids, Span};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TacticAst;
use crate::kernel::Formula;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintKind {
    Resolve,
    Unfold,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandAst {
    Definition { name: String, params: Vec<String>, body: Formula },
    Axiom { name: String, statement: Formula },
    Theorem { name: String, statement: Formula },
    Hint { kind: HintKind, names: Vec<String> },
    Tactic(TacticAst),
    Qed,
    Check(Formula),
    Print(String),
    Require(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Global,
    Branch,
    Tactic,
    Merge,
    Query,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Global => "global",
            Classification::Branch => "branch",
            Classification::Tactic => "tactic",
            Classification::Merge => "merge",
            Classification::Query => "query",
        })
    }
}

/// An occurrence of a name, as a character range inside its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRef {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub ast: CommandAst,
    pub refs: Vec<NameRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("syntax error at character {position}: {message}")]
pub struct ParseError {
    pub message: String,
    /// Character offset inside the sentence.
    pub position: usize,
}

pub fn parse(span: &Span) -> Result<Parsed, ParseError> {
    if let Some(reason) = &span.unparsable {
        return Err(ParseError { message: reason.clone(), position: 0 });
    }
    parser::parse_sentence(&span.text)
}

pub fn parse_str(text: &str) -> Result<Parsed, ParseError> {
    parser::parse_sentence(text)
}

pub fn classify(ast: &CommandAst) -> Classification {
    match ast {
        CommandAst::Definition { .. } | CommandAst::Axiom { .. } | CommandAst::Hint { .. } | CommandAst::Require(_) => {
            Classification::Global
        }
        CommandAst::Theorem { .. } => Classification::Branch,
        CommandAst::Tactic(_) => Classification::Tactic,
        CommandAst::Qed => Classification::Merge,
        CommandAst::Check(_) | CommandAst::Print(_) => Classification::Query,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const DECIDABLE_DOC: &str = "Definition decidable (P : Prop) := P \\/ ~ P.

Theorem dec_False : decidable False.
Proof.
  unfold decidable, not.
  auto.
Qed.
";

    pub(crate) const HINT_DOC: &str = "Definition decidable (P : Prop) := P \\/ ~ P.

Theorem dec_False : decidable False.
Proof.
  Hint Extern 1 => unfold decidable, not.
  auto.
Qed.
";

    fn ast(s: &str) -> CommandAst {
        parse_str(s).unwrap().ast
    }

    #[test]
    fn decidable_chops_into_six_spans() {
        let spans = chop(DECIDABLE_DOC);
        assert_eq!(spans.len(), 6);
        assert_eq!(spans[1].text, "Theorem dec_False : decidable False.");
        assert_eq!(spans[3].text, "unfold decidable, not.");
    }

    #[test]
    fn sample_classification() {
        let classes =
            |doc: &str| -> Vec<Classification> { chop(doc).iter().map(|s| classify(&parse(s).unwrap().ast)).collect() };
        use Classification::*;
        assert_eq!(classes(DECIDABLE_DOC), vec![Global, Branch, Tactic, Tactic, Tactic, Merge]);
        assert_eq!(classes(HINT_DOC), vec![Global, Branch, Tactic, Global, Tactic, Merge]);
    }

    #[test]
    fn parses_theorem_with_definition_application() {
        assert_eq!(
            ast("Theorem dec_False : decidable False."),
            CommandAst::Theorem {
                name: "dec_False".into(),
                statement: Formula::app("decidable", vec![Formula::False])
            }
        );
        assert_eq!(ast("Qed."), CommandAst::Qed);
    }

    #[test]
    fn theorem_without_name_fails_at_colon() {
        let err = parse_str("Theorem : .").unwrap_err();
        assert_eq!(err.position, 8);
    }

    #[test]
    fn definition_eliminates_negation_sugar() {
        let p = Formula::atom("P");
        assert_eq!(
            ast("Definition decidable (P : Prop) := P \\/ ~ P."),
            CommandAst::Definition {
                name: "decidable".into(),
                params: vec!["P".into()],
                body: Formula::or(p.clone(), Formula::negation(p)),
            }
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let f = |s: &str| match ast(&format!("Check {s}.")) {
            CommandAst::Check(f) => f,
            _ => unreachable!(),
        };
        let (a, b, c) = (Formula::atom("A"), Formula::atom("B"), Formula::atom("C"));
        assert_eq!(f("A -> B -> C"), Formula::imp(a.clone(), Formula::imp(b.clone(), c.clone())));
        assert_eq!(f("A /\\ B \\/ C"), Formula::or(Formula::and(a.clone(), b.clone()), c.clone()));
        assert_eq!(f("~ A /\\ B"), Formula::and(Formula::negation(a.clone()), b.clone()));
        assert_eq!(f("A \\/ B -> C"), Formula::imp(Formula::or(a.clone(), b.clone()), c.clone()));
        assert_eq!(f("d A (B -> C)"), Formula::app("d", vec![a, Formula::imp(b, c)]));
    }

    #[test]
    fn tactics_and_par() {
        assert_eq!(ast("Proof."), CommandAst::Tactic(TacticAst::ProofMarker));
        assert_eq!(ast("auto."), CommandAst::Tactic(TacticAst::Auto(None)));
        assert_eq!(ast("auto 7."), CommandAst::Tactic(TacticAst::Auto(Some(7))));
        assert_eq!(ast("intro h."), CommandAst::Tactic(TacticAst::Intro(Some("h".into()))));
        assert_eq!(ast("par: auto."), CommandAst::Tactic(TacticAst::Par(Box::new(TacticAst::Auto(None)))));
        assert!(parse_str("par: par: auto.").is_err());
        assert_eq!(
            ast("unfold decidable, not."),
            CommandAst::Tactic(TacticAst::Unfold(vec!["decidable".into(), "not".into()]))
        );
    }

    #[test]
    fn hints() {
        assert_eq!(
            ast("Hint Extern 1 => unfold decidable, not."),
            CommandAst::Hint { kind: HintKind::Unfold, names: vec!["decidable".into(), "not".into()] }
        );
        assert_eq!(
            ast("Hint Resolve a b."),
            CommandAst::Hint { kind: HintKind::Resolve, names: vec!["a".into(), "b".into()] }
        );
    }

    #[test]
    fn unknown_words_are_errors() {
        let err = parse_str("Frobnicate x.").unwrap_err();
        assert_eq!(err.position, 0);
        assert!(parse_str("Check True True.").is_err());
        assert!(parse_str("Check .").is_err());
    }

    #[test]
    fn references_carry_positions() {
        let parsed = parse_str("Theorem dec_False : decidable False.").unwrap();
        assert_eq!(parsed.refs, vec![NameRef { name: "decidable".into(), start: 20, end: 29 }]);
        let parsed = parse_str("Definition d (P : Prop) := P /\\ e.").unwrap();
        assert_eq!(parsed.refs.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["e"]);
        assert!(parse_str("auto.").unwrap().refs.is_empty());
    }

    fn formula_strategy() -> impl proptest::strategy::Strategy<Value = Formula> {
        use proptest::prelude::*;
        let leaf = prop_oneof![Just(Formula::True), Just(Formula::False), "[a-d]".prop_map(Formula::Atom),];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::imp(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                ("[e-g]", proptest::collection::vec(inner, 1..3)).prop_map(|(d, xs)| Formula::DefApp(d, xs)),
            ]
        })
    }

    proptest::proptest! {
        #[test]
        fn printing_then_parsing_is_identity(f in formula_strategy()) {
            let parsed = ast(&format!("Check {f}."));
            proptest::prop_assert_eq!(parsed, CommandAst::Check(f));
        }
    }
}
