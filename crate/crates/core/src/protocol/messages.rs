//! Wire schemas. One JSON object per line, tagged by `type`.

use serde::{Deserialize, Serialize};

use crate::ids::SpanId;
use crate::stm::{Hyperlink, SessionEvent, SpanStatus};

pub const PROTOCOL_VERSION: u32 = 1;

/// Span id used for feedback that belongs to no span.
pub const NO_SPAN: SpanId = SpanId::NONE;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edit {
    Retain(usize),
    Insert(String),
    Delete(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Update { document_id: u64, edits: Vec<Edit> },
    Perspective { document_id: u64, span_ids: Vec<SpanId> },
    Query { span_id: SpanId, text: String },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanInfo {
    pub span_id: SpanId,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusState {
    Processing,
    Processed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub char_range: (usize, usize),
    pub target_span_id: Option<SpanId>,
    pub target_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackKind {
    Status {
        state: StatusState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        char_range: Option<(usize, usize)>,
    },
    Goals {
        text: String,
    },
    Markup {
        hyperlinks: Vec<Link>,
    },
    QueryResult {
        text: String,
        ok: bool,
    },
    Error {
        message: String,
    },
}

impl FeedbackKind {
    pub fn status(status: &SpanStatus) -> FeedbackKind {
        match status {
            SpanStatus::Processing => {
                FeedbackKind::Status { state: StatusState::Processing, message: None, char_range: None }
            }
            SpanStatus::Processed => {
                FeedbackKind::Status { state: StatusState::Processed, message: None, char_range: None }
            }
            SpanStatus::Failed { message, range } => FeedbackKind::Status {
                state: StatusState::Failed,
                message: Some(message.clone()),
                char_range: Some(*range),
            },
        }
    }

    /// The feedback for a session event, with the span it concerns.
    pub fn of_event(event: &SessionEvent) -> Option<(SpanId, FeedbackKind)> {
        Some(match event {
            SessionEvent::Status { span, status } => (*span, FeedbackKind::status(status)),
            SessionEvent::Goals { span, text } => (*span, FeedbackKind::Goals { text: text.clone() }),
            SessionEvent::Markup { span, links } => {
                (*span, FeedbackKind::Markup { hyperlinks: links.iter().map(Link::from).collect() })
            }
            SessionEvent::QueryResult { span, result } => {
                let (text, ok) = match result {
                    Ok(t) => (t.clone(), true),
                    Err(e) => (e.clone(), false),
                };
                (*span, FeedbackKind::QueryResult { text, ok })
            }
            SessionEvent::PromiseResolved { .. } => return None,
        })
    }
}

impl From<&Hyperlink> for Link {
    fn from(h: &Hyperlink) -> Link {
        Link { char_range: h.range, target_span_id: h.target_span, target_name: h.target_name.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: u32,
    },
    Ack {
        document_id: u64,
        revision: u64,
        spans: Vec<SpanInfo>,
    },
    Feedback {
        span_id: SpanId,
        revision: u64,
        #[serde(flatten)]
        kind: FeedbackKind,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditError {
    #[error("edit runs past the end of the document ({len} characters)")]
    PastEnd { len: usize },
}

/// Applies `edits` to `text`. Positions count characters; whatever the
/// edits do not reach is retained.
pub fn apply_edits(text: &str, edits: &[Edit]) -> Result<String, EditError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for e in edits {
        match e {
            Edit::Retain(n) | Edit::Delete(n) => {
                let end = at + n;
                if end > chars.len() {
                    return Err(EditError::PastEnd { len: chars.len() });
                }
                if matches!(e, Edit::Retain(_)) {
                    out.extend(&chars[at..end]);
                }
                at = end;
            }
            Edit::Insert(s) => out.push_str(s),
        }
    }
    out.extend(&chars[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn schemas() {
        let m: ClientMessage = serde_json::from_value(
            json!({"type": "update", "document_id": 1, "edits": [{"retain": 2}, {"insert": "x"}, {"delete": 1}]}),
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::Update {
                document_id: 1,
                edits: vec![Edit::Retain(2), Edit::Insert("x".into()), Edit::Delete(1)]
            }
        );
        let m: ClientMessage =
            serde_json::from_value(json!({"type": "perspective", "document_id": 1, "span_ids": [0, 3]})).unwrap();
        assert_eq!(m, ClientMessage::Perspective { document_id: 1, span_ids: vec![SpanId(0), SpanId(3)] });
        let m: ClientMessage =
            serde_json::from_value(json!({"type": "query", "span_id": 4, "text": "Print x."})).unwrap();
        assert_eq!(m, ClientMessage::Query { span_id: SpanId(4), text: "Print x.".into() });
        assert_eq!(
            serde_json::from_value::<ClientMessage>(json!({"type": "shutdown"})).unwrap(),
            ClientMessage::Shutdown
        );

        assert_eq!(
            serde_json::to_value(ServerMessage::Hello { version: 1 }).unwrap(),
            json!({"type": "hello", "version": 1})
        );
        let fb = ServerMessage::Feedback {
            span_id: SpanId(2),
            revision: 3,
            kind: FeedbackKind::status(&SpanStatus::Failed { message: "no".into(), range: (4, 9) }),
        };
        assert_eq!(
            serde_json::to_value(&fb).unwrap(),
            json!({"type": "feedback", "span_id": 2, "revision": 3, "kind": "status", "state": "failed", "message": "no", "char_range": [4, 9]})
        );
        let back: ServerMessage = serde_json::from_value(serde_json::to_value(&fb).unwrap()).unwrap();
        assert_eq!(back, fb);
        let ok = ServerMessage::Feedback {
            span_id: SpanId(1),
            revision: 1,
            kind: FeedbackKind::status(&SpanStatus::Processed),
        };
        assert_eq!(
            serde_json::to_value(&ok).unwrap(),
            json!({"type": "feedback", "span_id": 1, "revision": 1, "kind": "status", "state": "processed"})
        );
    }

    #[test]
    fn edits() {
        assert_eq!(
            apply_edits("hello", &[Edit::Retain(1), Edit::Delete(3), Edit::Insert("ipp".into())]).unwrap(),
            "hippo"
        );
        assert_eq!(apply_edits("", &[Edit::Insert("a".into())]).unwrap(), "a");
        assert_eq!(apply_edits("é!", &[Edit::Delete(1)]).unwrap(), "!");
        assert_eq!(apply_edits("ab", &[Edit::Retain(3)]), Err(EditError::PastEnd { len: 2 }));
    }

    proptest! {
        // the result equals splicing the same change into the text directly
        #[test]
        fn edit_is_a_splice(text in "[a-zé .]{0,30}", at in 0usize..31, del in 0usize..10, ins in "[x-z]{0,5}") {
            let chars: Vec<char> = text.chars().collect();
            let at = at.min(chars.len());
            let del = del.min(chars.len() - at);
            let mut expected: String = chars[..at].iter().collect();
            expected.push_str(&ins);
            expected.extend(&chars[at + del..]);
            let got = apply_edits(&text, &[Edit::Retain(at), Edit::Delete(del), Edit::Insert(ins.clone())]).unwrap();
            prop_assert_eq!(got, expected);
        }
    }
}
