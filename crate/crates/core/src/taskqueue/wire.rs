//! Length-prefixed frames carrying versioned JSON envelopes.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::ids::SpanId;

pub const SCHEMA_VERSION: u32 = 1;

/// Frames above this size are rejected as corrupt.
pub const MAX_FRAME: u32 = 256 << 20;

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("in-memory values always serialize")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest<B> {
    pub task_id: u64,
    pub schema_version: u32,
    pub body: B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The task itself is wrong, e.g. a failing proof. The worker is fine.
    Logic,
    /// Something about the worker or the channel went wrong.
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub message: String,
    pub span: Option<SpanId>,
}

impl ErrorReport {
    pub fn infrastructure(message: impl Into<String>) -> ErrorReport {
        ErrorReport { kind: ErrorKind::Infrastructure, message: message.into(), span: None }
    }

    pub fn logic(message: impl Into<String>, span: Option<SpanId>) -> ErrorReport {
        ErrorReport { kind: ErrorKind::Logic, message: message.into(), span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<R> {
    Finished(R),
    Failed(ErrorReport),
    Cancelled,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub wall_micros: u64,
    /// Base-state digests the worker holds after serving the request.
    pub cached: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse<R> {
    pub task_id: u64,
    pub schema_version: u32,
    pub outcome: Outcome<R>,
    pub stats: WorkerStats,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_layout_is_big_endian_length_then_body() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(buf, b"\x00\x00\x00\x05hello");
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"hello");
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn truncated_frames_are_errors() {
        let mut r: &[u8] = b"\x00\x00";
        assert!(read_frame(&mut r).is_err());
        let mut r: &[u8] = b"\x00\x00\x00\x09abc";
        assert!(read_frame(&mut r).is_err());
        let mut r: &[u8] = b"\xff\xff\xff\xff";
        assert!(read_frame(&mut r).is_err());
    }

    #[test]
    fn response_envelope_shape() {
        let resp: WireResponse<String> = WireResponse {
            task_id: 7,
            schema_version: SCHEMA_VERSION,
            outcome: Outcome::Failed(ErrorReport::logic("no", Some(SpanId(3)))),
            stats: WorkerStats::default(),
        };
        let v: serde_json::Value = serde_json::from_slice(&encode(&resp)).unwrap();
        assert_eq!(v["outcome"]["failed"]["kind"], "logic");
        assert_eq!(v["outcome"]["failed"]["span"], 3);
    }

    proptest! {
        #[test]
        fn frames_round_trip(bodies in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..8)) {
            let mut buf = Vec::new();
            for b in &bodies {
                write_frame(&mut buf, b).unwrap();
            }
            let mut r = &buf[..];
            for b in &bodies {
                prop_assert_eq!(&read_frame(&mut r).unwrap().unwrap(), b);
            }
            prop_assert_eq!(read_frame(&mut r).unwrap(), None);
        }
    }
}
