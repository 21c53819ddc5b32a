//! Error type shared by every module in the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Anything that can go wrong while loading data, training, or evaluating.
#[derive(Debug, Error)]
pub enum Error {
    /// I/O failure with the offending path attached.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// I/O failure on a generic reader or writer.
    #[error("io error: {0}")]
    IoStream(#[from] std::io::Error),

    /// A line in an input file did not match the expected shape.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A structured file had a bad header, magic number, or section.
    #[error("bad format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// An input that must be nonempty was empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Entity name not present in the graph dictionary.
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    /// Relation name not present in the graph dictionary.
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    /// Entity id outside the graph's id range.
    #[error("entity id {0} out of range")]
    InvalidEntityId(u32),

    /// Relation id outside the graph's id range.
    #[error("relation id {0} out of range")]
    InvalidRelationId(u32),

    /// Inverse augmentation applied twice.
    #[error("graph is already inverse-closed")]
    AlreadyInverseClosed,

    /// An operation that needs inverse relations ran on a raw graph.
    #[error("graph is not inverse-closed")]
    NotInverseClosed,

    /// A task relation does not have enough triples to split.
    #[error("relation `{relation}` has {count} triple(s); need at least {needed}")]
    RelationTooSmall {
        relation: String,
        count: usize,
        needed: usize,
    },

    /// A path argument that must be nonempty was empty.
    #[error("empty relation path")]
    EmptyPath,

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// NaN or infinity showed up where finite numbers are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A caller-supplied parameter is out of its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input is structurally valid but unusable (e.g. one-class labels).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attaches a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Builds a parse error for a 1-based line of `path`.
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Builds a format error for a structured file.
    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
