use std::path::PathBuf;

use crate::relation::RelationLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports. Variants are grouped by the stage that
/// raises them; the FFI layer maps each group onto a stable status code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // --- lexical database -------------------------------------------------
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("pointer from {from} targets unknown synset {to}")]
    DanglingPointer { from: String, to: String },

    // --- dataset construction --------------------------------------------
    #[error("only {available} {label} pairs available, {requested} requested")]
    Exhausted {
        label: RelationLabel,
        requested: usize,
        available: usize,
    },
    #[error("random pair sampling gave up after {attempts} attempts ({found} of {requested} found)")]
    SamplingBudget {
        attempts: usize,
        found: usize,
        requested: usize,
    },
    #[error("part-of-speech target unattainable: bucket {bucket} needs {needed}, has {available}")]
    PosUnattainable {
        bucket: String,
        needed: usize,
        available: usize,
    },
    #[error("lemma-disjoint split infeasible: best achievable train ratio {achieved_ratio:.4}, worst per-label deviation {max_deviation} pairs")]
    SplitInfeasible {
        achieved_ratio: f64,
        max_deviation: usize,
    },

    // --- binary formats ---------------------------------------------------
    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("{path} is truncated: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("checksum mismatch for {what}: expected {expected}, found {found}")]
    Checksum {
        what: String,
        expected: String,
        found: String,
    },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("unsupported nonlinearity id {0}")]
    UnsupportedNonlinearity(u32),

    // --- numerics ---------------------------------------------------------
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("class index {0} has no examples")]
    AbsentClass(usize),
    #[error("{0} is not a valid target (the no-relation class cannot be a target)")]
    InvalidTarget(RelationLabel),
    #[error("center of mass undefined: all accuracies are zero")]
    UndefinedCenterOfMass,
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("unsupported relation {0} for this operation")]
    UnsupportedRelation(RelationLabel),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bootstrap replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown token id {0}")]
    UnknownToken(u32),

    // --- pipeline ---------------------------------------------------------
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad paths, configs, data) as
    /// opposed to internal failures. The CLI maps this onto exit codes 1/2.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Replicate { .. } | Error::Serde(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
