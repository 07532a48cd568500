//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ---- files and records ----
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed record: {0}")]
    MalformedRecord(String),

    // ---- corpus invariants ----
    #[error("reserved separator '#' in field {0}")]
    ReservedSeparator(String),
    #[error("empty field {0}")]
    EmptyField(String),
    #[error("duplicate book_key {0:?}")]
    DuplicateBookKey(String),
    #[error("duplicate metadata triple for title {0:?} by {1:?}")]
    DuplicateMetadata(String, String),
    #[error("book {0:?} has no chapters")]
    NoChapters(String),

    // ---- identifiers ----
    #[error("identifier collision: {0:?}")]
    IdentifierCollision(String),
    #[error("bad identifier {id:?}: {msg}")]
    IdentifierFormat { id: String, msg: String },

    // ---- numerics ----
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    // ---- model ----
    #[error("empty input to the encoder")]
    EmptyInput,
    #[error("target token {0:?} is out of vocabulary")]
    OutOfVocab(String),
    #[error("decoder prefix length {len} exceeds maximum {max}")]
    DecodeLengthExceeded { len: usize, max: usize },

    // ---- decoding ----
    #[error("prefix trie is empty")]
    EmptyTrie,
    #[error("duplicate identifier in trie: {0:?}")]
    DuplicateIdentifier(String),
    #[error("no per-book trie for book {0:?}")]
    MissingPerBookTrie(String),

    // ---- augmentation ----
    #[error("query generation failed for book {book_key:?} ({category}): {msg}")]
    QueryGeneration {
        book_key: String,
        category: String,
        msg: String,
    },
    #[error("{0}")]
    BadArgument(String),

    // ---- configuration and pipeline ----
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("http: {0}")]
    Http(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_line(line: usize, source: Error) -> Self {
        Error::AtLine {
            line,
            source: Box::new(source),
        }
    }

    /// Exit status category for the CLI: 2 config, 3 missing artifact,
    /// 4 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadArgument(_) => 2,
            Error::MissingArtifact(_) => 3,
            _ => 4,
        }
    }
}
