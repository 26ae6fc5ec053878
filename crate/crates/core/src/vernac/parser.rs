use super::lexer::{tokenize, Tok, Token};
use super::{CommandAst, HintKind, NameRef, ParseError, Parsed};
use crate::engine::TacticAst;
use crate::kernel::Formula;

/// Parses one sentence (terminator included).
pub fn parse_sentence(text: &str) -> Result<Parsed, ParseError> {
    let tokens = tokenize(text).map_err(|e| ParseError { message: e.message, position: e.position })?;
    let text_len = text.chars().count();
    let Some((last, body)) = tokens.split_last() else {
        return Err(ParseError { message: "empty sentence".into(), position: 0 });
    };
    if last.tok != Tok::Dot {
        return Err(ParseError { message: "missing terminating `.`".into(), position: text_len });
    }
    let mut p = Parser { toks: body, pos: 0, end: last.start, refs: Vec::new() };
    let ast = p.command()?;
    if let Some(t) = p.peek_token() {
        return Err(p.error_at(t.start, format!("unexpected `{}`", t.tok)));
    }
    Ok(Parsed { ast, refs: p.refs })
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    /// Position reported when input runs out.
    end: usize,
    refs: Vec<NameRef>,
}

const TACTIC_WORDS: &[&str] =
    &["intro", "intros", "apply", "exact", "split", "left", "right", "assumption", "unfold", "auto", "idtac", "fail"];

impl<'a> Parser<'a> {
    fn peek_token(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.peek_token().map(|t| &t.tok)
    }

    fn position(&self) -> usize {
        self.peek_token().map_or(self.end, |t| t.start)
    }

    fn error_at(&self, position: usize, message: impl Into<String>) -> ParseError {
        ParseError { message: message.into(), position }
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_at(self.position(), format!("expected {expected}, found `{t}`")),
            None => self.error_at(self.position(), format!("expected {expected}")),
        }
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("`{tok}`")))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// A name, recorded as a reference when `is_ref`.
    fn name(&mut self, is_ref: bool) -> Result<String, ParseError> {
        match self.peek_token() {
            Some(Token { tok: Tok::Ident(s), start, end }) if !is_reserved(s) => {
                self.pos += 1;
                if is_ref {
                    self.refs.push(NameRef { name: s.clone(), start: *start, end: *end });
                }
                Ok(s.clone())
            }
            _ => Err(self.error("a name")),
        }
    }

    fn command(&mut self) -> Result<CommandAst, ParseError> {
        let Some(Token { tok: Tok::Ident(word), start, .. }) = self.peek_token() else {
            return Err(self.error("a command"));
        };
        let word = word.as_str();
        if word == "par" && matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Colon)) {
            self.pos += 2;
            let inner_pos = self.position();
            let inner = self.tactic()?;
            if matches!(inner, TacticAst::Par(_)) {
                return Err(self.error_at(inner_pos, "`par:` may not nest"));
            }
            return Ok(CommandAst::Tactic(TacticAst::Par(Box::new(inner))));
        }
        if TACTIC_WORDS.contains(&word) {
            return Ok(CommandAst::Tactic(self.tactic()?));
        }
        let start = *start;
        self.pos += 1;
        Ok(match word {
            "Definition" => {
                let name = self.name(false)?;
                let params = self.binders()?;
                self.expect(&Tok::ColonEq)?;
                let mark = self.refs.len();
                let body = self.formula()?;
                // occurrences of parameters are not references to globals
                let tail: Vec<NameRef> = self.refs.drain(mark..).filter(|r| !params.contains(&r.name)).collect();
                self.refs.extend(tail);
                CommandAst::Definition { name, params, body }
            }
            "Axiom" | "Theorem" => {
                let name = self.name(false)?;
                self.expect(&Tok::Colon)?;
                let statement = self.formula()?;
                if word == "Axiom" {
                    CommandAst::Axiom { name, statement }
                } else {
                    CommandAst::Theorem { name, statement }
                }
            }
            "Hint" => self.hint()?,
            "Qed" => CommandAst::Qed,
            "Proof" => CommandAst::Tactic(TacticAst::ProofMarker),
            "Check" => CommandAst::Check(self.formula()?),
            "Print" => CommandAst::Print(self.name(true)?),
            "Require" => CommandAst::Require(self.name(false)?),
            other => return Err(self.error_at(start, format!("unknown command `{other}`"))),
        })
    }

    fn binders(&mut self) -> Result<Vec<String>, ParseError> {
        let mut params = Vec::new();
        loop {
            if self.eat(&Tok::LParen) {
                let mut group = vec![self.name(false)?];
                while matches!(self.peek(), Some(Tok::Ident(_))) {
                    group.push(self.name(false)?);
                }
                self.expect(&Tok::Colon)?;
                if !self.eat_keyword("Prop") {
                    return Err(self.error("`Prop`"));
                }
                self.expect(&Tok::RParen)?;
                params.extend(group);
            } else if matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s)) {
                params.push(self.name(false)?);
            } else {
                return Ok(params);
            }
        }
    }

    fn hint(&mut self) -> Result<CommandAst, ParseError> {
        let kind = if self.eat_keyword("Resolve") {
            HintKind::Resolve
        } else if self.eat_keyword("Unfold") {
            HintKind::Unfold
        } else if self.eat_keyword("Extern") {
            // `Hint Extern <n> => unfold a, b` is read as an unfold hint
            if !matches!(self.bump().map(|t| &t.tok), Some(Tok::Num(_))) {
                self.pos -= 1;
                return Err(self.error("a cost"));
            }
            self.expect(&Tok::FatArrow)?;
            if !self.eat_keyword("unfold") {
                return Err(self.error("`unfold`"));
            }
            HintKind::Unfold
        } else {
            return Err(self.error("`Resolve`, `Unfold` or `Extern`"));
        };
        let names = self.name_list()?;
        Ok(CommandAst::Hint { kind, names })
    }

    /// One or more names, optionally separated by commas.
    fn name_list(&mut self) -> Result<Vec<String>, ParseError> {
        let mut names = vec![self.name(true)?];
        loop {
            let comma = self.eat(&Tok::Comma);
            if matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s)) {
                names.push(self.name(true)?);
            } else if comma {
                return Err(self.error("a name"));
            } else {
                return Ok(names);
            }
        }
    }

    fn tactic(&mut self) -> Result<TacticAst, ParseError> {
        let Some(Token { tok: Tok::Ident(word), start, .. }) = self.peek_token() else {
            return Err(self.error("a tactic"));
        };
        self.pos += 1;
        Ok(match word.as_str() {
            "intro" => {
                if matches!(self.peek(), Some(Tok::Ident(_))) {
                    TacticAst::Intro(Some(self.name(false)?))
                } else {
                    TacticAst::Intro(None)
                }
            }
            "intros" => TacticAst::Intros,
            "apply" => TacticAst::Apply(self.name(true)?),
            "exact" => TacticAst::Exact(self.name(true)?),
            "split" => TacticAst::Split,
            "left" => TacticAst::Left,
            "right" => TacticAst::Right,
            "assumption" => TacticAst::Assumption,
            "unfold" => TacticAst::Unfold(self.name_list()?),
            "auto" => match self.peek() {
                Some(Tok::Num(n)) => {
                    let n = *n;
                    self.pos += 1;
                    TacticAst::Auto(Some(n))
                }
                _ => TacticAst::Auto(None),
            },
            "idtac" => TacticAst::Idtac,
            "fail" => TacticAst::Fail,
            "Proof" => TacticAst::ProofMarker,
            other => return Err(self.error_at(*start, format!("unknown tactic `{other}`"))),
        })
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Arrow) {
            Ok(Formula::imp(lhs, self.formula()?))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.conjunction()?;
        if self.eat(&Tok::Or) {
            Ok(Formula::or(lhs, self.disjunction()?))
        } else {
            Ok(lhs)
        }
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.negation()?;
        if self.eat(&Tok::And) {
            Ok(Formula::and(lhs, self.conjunction()?))
        } else {
            Ok(lhs)
        }
    }

    fn negation(&mut self) -> Result<Formula, ParseError> {
        if self.eat(&Tok::Tilde) {
            Ok(Formula::negation(self.negation()?))
        } else {
            self.application()
        }
    }

    fn starts_atomic(&self) -> bool {
        match self.peek() {
            Some(Tok::LParen) => true,
            Some(Tok::Ident(s)) => s == "True" || s == "False" || !is_reserved(s),
            _ => false,
        }
    }

    fn application(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let head = self.name(true)?;
                let mut args = Vec::new();
                while self.starts_atomic() {
                    args.push(self.atomic()?);
                }
                Ok(if args.is_empty() { Formula::Atom(head) } else { Formula::DefApp(head, args) })
            }
            _ => self.atomic(),
        }
    }

    fn atomic(&mut self) -> Result<Formula, ParseError> {
        if self.eat_keyword("True") {
            return Ok(Formula::True);
        }
        if self.eat_keyword("False") {
            return Ok(Formula::False);
        }
        if self.eat(&Tok::LParen) {
            let f = self.formula()?;
            self.expect(&Tok::RParen)?;
            return Ok(f);
        }
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => Ok(Formula::Atom(self.name(true)?)),
            _ => Err(self.error("a formula")),
        }
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "True"
            | "False"
            | "Prop"
            | "Definition"
            | "Axiom"
            | "Theorem"
            | "Hint"
            | "Qed"
            | "Check"
            | "Print"
            | "Require"
            | "Proof"
    )
}
