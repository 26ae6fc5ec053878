use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(u32),
    Str(String),
    LParen,
    RParen,
    Colon,
    ColonEq,
    Arrow,
    FatArrow,
    And,
    Or,
    Tilde,
    Comma,
    Dot,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Num(n) => write!(f, "{n}"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Colon => write!(f, ":"),
            Tok::ColonEq => write!(f, ":="),
            Tok::Arrow => write!(f, "->"),
            Tok::FatArrow => write!(f, "=>"),
            Tok::And => write!(f, "/\\"),
            Tok::Or => write!(f, "\\/"),
            Tok::Tilde => write!(f, "~"),
            Tok::Comma => write!(f, ","),
            Tok::Dot => write!(f, "."),
        }
    }
}

/// A token with its character range inside the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub message: String,
    pub position: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let cs: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        let next = cs.get(i + 1).copied();
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '(' && next == Some('*') {
            let mut depth = 1;
            i += 2;
            while depth > 0 {
                match (cs.get(i), cs.get(i + 1)) {
                    (Some('('), Some('*')) => {
                        depth += 1;
                        i += 2;
                    }
                    (Some('*'), Some(')')) => {
                        depth -= 1;
                        i += 2;
                    }
                    (Some(_), _) => i += 1,
                    (None, _) => return Err(LexError { message: "unterminated comment".into(), position: start }),
                }
            }
            continue;
        }
        let (tok, len) = match (c, next) {
            (':', Some('=')) => (Tok::ColonEq, 2),
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('=', Some('>')) => (Tok::FatArrow, 2),
            ('/', Some('\\')) => (Tok::And, 2),
            ('\\', Some('/')) => (Tok::Or, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (':', _) => (Tok::Colon, 1),
            ('~', _) => (Tok::Tilde, 1),
            (',', _) => (Tok::Comma, 1),
            ('.', _) => (Tok::Dot, 1),
            ('"', _) => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match (cs.get(j), cs.get(j + 1)) {
                        (Some('"'), Some('"')) => {
                            s.push('"');
                            j += 2;
                        }
                        (Some('"'), _) => break,
                        (Some(&ch), _) => {
                            s.push(ch);
                            j += 1;
                        }
                        (None, _) => return Err(LexError { message: "unterminated string".into(), position: start }),
                    }
                }
                (Tok::Str(s), j + 1 - i)
            }
            (d, _) if d.is_ascii_digit() => {
                let mut j = i;
                while j < cs.len() && cs[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = cs[i..j].iter().collect();
                let n = digits.parse().map_err(|_| LexError { message: "number too large".into(), position: start })?;
                (Tok::Num(n), j - i)
            }
            (a, _) if is_ident_start(a) => {
                let mut j = i;
                while j < cs.len() && is_ident_char(cs[j]) {
                    j += 1;
                }
                (Tok::Ident(cs[i..j].iter().collect()), j - i)
            }
            (other, _) => return Err(LexError { message: format!("unexpected character `{other}`"), position: start }),
        };
        i += len;
        out.push(Token { tok, start, end: i });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(
            toks("P \\/ ~ P (* c (* d *) *) -> Q /\\ R := =>"),
            vec![
                Tok::Ident("P".into()),
                Tok::Or,
                Tok::Tilde,
                Tok::Ident("P".into()),
                Tok::Arrow,
                Tok::Ident("Q".into()),
                Tok::And,
                Tok::Ident("R".into()),
                Tok::ColonEq,
                Tok::FatArrow,
            ]
        );
    }

    #[test]
    fn strings_with_doubled_quotes() {
        assert_eq!(toks("\"a\"\"b\""), vec![Tok::Str("a\"b".into())]);
    }

    #[test]
    fn positions_are_characters() {
        let t = tokenize("λx y").unwrap();
        assert_eq!((t[1].start, t[1].end), (3, 4));
    }

    #[test]
    fn stray_character_is_an_error() {
        assert_eq!(tokenize("a # b").unwrap_err().position, 2);
    }
}
