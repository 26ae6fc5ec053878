use serde::{Deserialize, Serialize};

use crate::ids::SpanId;

/// One sentence of the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub id: SpanId,
    /// Raw sentence text, terminator included.
    pub text: String,
    /// Start position in the document, in characters.
    pub offset: usize,
    /// Set on a trailing fragment that cannot form a sentence.
    pub unparsable: Option<String>,
}

impl Span {
    pub fn len_chars(&self) -> usize {
        self.text.chars().count()
    }

    pub fn end(&self) -> usize {
        self.offset + self.len_chars()
    }
}

/// Splits a document into sentences, numbering spans from 0.
pub fn chop(text: &str) -> Vec<Span> {
    let mut next = 0;
    chop_with_ids(text, || {
        next += 1;
        SpanId(next - 1)
    })
}

/// Splits a document into sentences.
///
/// A sentence ends at a `.` followed by whitespace or end of text, unless
/// the dot sits inside a (nestable) comment or a string literal. Leading
/// whitespace is not part of a span; a trailing fragment made only of
/// whitespace and comments yields no span.
pub fn chop_with_ids(text: &str, mut next_id: impl FnMut() -> SpanId) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut pos = 0;
    loop {
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        if pos >= chars.len() {
            break;
        }
        let start = pos;
        match scan_sentence(&chars, start) {
            Scan::Sentence(end) => {
                spans.push(Span {
                    id: next_id(),
                    text: chars[start..end].iter().collect(),
                    offset: start,
                    unparsable: None,
                });
                pos = end;
            }
            Scan::Blank => break,
            Scan::Broken(reason) => {
                spans.push(Span {
                    id: next_id(),
                    text: chars[start..].iter().collect(),
                    offset: start,
                    unparsable: Some(reason.to_string()),
                });
                break;
            }
        }
    }
    spans
}

enum Scan {
    /// Sentence ending just before this index (exclusive).
    Sentence(usize),
    /// Only comments and whitespace remain.
    Blank,
    Broken(&'static str),
}

fn scan_sentence(chars: &[char], start: usize) -> Scan {
    let mut i = start;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut saw_text = false;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if in_string {
            if c == '"' {
                if next == Some('"') {
                    i += 2;
                    continue;
                }
                in_string = false;
            }
            i += 1;
            continue;
        }
        if depth > 0 {
            if c == '(' && next == Some('*') {
                depth += 1;
                i += 2;
            } else if c == '*' && next == Some(')') {
                depth -= 1;
                i += 2;
            } else {
                i += 1;
            }
            continue;
        }
        match c {
            '(' if next == Some('*') => {
                depth = 1;
                i += 2;
            }
            '"' => {
                saw_text = true;
                in_string = true;
                i += 1;
            }
            '.' if next.is_none_or(char::is_whitespace) => return Scan::Sentence(i + 1),
            c => {
                if !c.is_whitespace() {
                    saw_text = true;
                }
                i += 1;
            }
        }
    }
    if depth > 0 {
        Scan::Broken("unterminated comment")
    } else if in_string {
        Scan::Broken("unterminated string")
    } else if saw_text {
        Scan::Broken("missing terminating `.`")
    } else {
        Scan::Blank
    }
}
