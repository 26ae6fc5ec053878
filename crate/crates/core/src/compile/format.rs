//! The `.vo` and `.vio` files: canonical JSON, gzip-compressed.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Digest;
use crate::ids::SpanId;
use crate::kernel::{Formula, Term};
use crate::stm::ProverRequest;

pub const VO_MAGIC: &str = "SVO";
pub const VIO_MAGIC: &str = "SVIO";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a compiled module: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("bad magic `{found}` (expected `{expected}`)")]
    Magic { expected: &'static str, found: String },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
}

/// A logical entry as recorded in a compiled file: statements only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleEntry {
    Definition { name: String, params: Vec<String>, body: Formula },
    Axiom { name: String, statement: Formula },
    Theorem { name: String, statement: Formula },
}

impl ModuleEntry {
    pub fn name(&self) -> &str {
        match self {
            ModuleEntry::Definition { name, .. }
            | ModuleEntry::Axiom { name, .. }
            | ModuleEntry::Theorem { name, .. } => name,
        }
    }
}

/// One entry of the compiled environment. `imported` entries came in
/// through `Require` and are not part of this module's own contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub imported: bool,
    pub entry: ModuleEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub version: u32,
    pub module: String,
    pub source_digest: Digest,
    /// Modules named by `Require` in the source, in order.
    pub requires: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofOutcome {
    Term(Term),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofRecord {
    pub name: String,
    pub outcome: ProofOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoFile {
    pub header: Header,
    pub environment: Vec<FileEntry>,
    /// Evidence for the module's own theorems, in order.
    pub proofs: Vec<ProofRecord>,
    /// Set only when every own theorem passed the synchronous check.
    pub swf: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub id: SpanId,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingProof {
    pub name: String,
    pub request: ProverRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VioFile {
    pub header: Header,
    pub environment: Vec<FileEntry>,
    pub spans: Vec<SpanRecord>,
    pub pending: Vec<PendingProof>,
}

/// What an importer reads of a `.vo`: the proofs section is skipped
/// without being decoded.
#[derive(Deserialize)]
pub struct VoStatements {
    pub header: Header,
    pub environment: Vec<FileEntry>,
    #[allow(dead_code)]
    proofs: IgnoredAny,
    pub swf: bool,
}

fn write_gz<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let file = File::create(path)?;
    // one large write: the encoder is slow on the many small ones serde makes
    let bytes = serde_json::to_vec(value)?;
    let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
    gz.write_all(&bytes)?;
    gz.finish()?.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct HeaderOnly {
    header: Header,
}

/// Decodes the header alone first, so a file of the wrong kind or version is
/// reported as such rather than as a decoding error.
fn read_gz<T: DeserializeOwned>(path: &Path, magic: &'static str) -> Result<T, FormatError> {
    let mut bytes = Vec::new();
    GzDecoder::new(BufReader::new(File::open(path)?)).read_to_end(&mut bytes)?;
    let h: HeaderOnly = serde_json::from_slice(&bytes)?;
    check_header(&h.header, magic)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn check_header(h: &Header, expected: &'static str) -> Result<(), FormatError> {
    if h.magic != expected {
        return Err(FormatError::Magic { expected, found: h.magic.clone() });
    }
    if h.version != FORMAT_VERSION {
        return Err(FormatError::Version(h.version));
    }
    Ok(())
}

impl VoFile {
    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        write_gz(path, self)
    }

    pub fn read(path: &Path) -> Result<VoFile, FormatError> {
        read_gz(path, VO_MAGIC)
    }

    /// Reads statements only; proof terms are never decoded.
    pub fn read_statements(path: &Path) -> Result<VoStatements, FormatError> {
        read_gz(path, VO_MAGIC)
    }
}

impl VioFile {
    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        write_gz(path, self)
    }

    pub fn read(path: &Path) -> Result<VioFile, FormatError> {
        read_gz(path, VIO_MAGIC)
    }
}
