//! Error type shared by every module of the crate.

use std::path::PathBuf;

use crate::causal::WeightedDag;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request itself is malformed: bad parameter, incompatible model file.
    Config,
    /// The input data cannot be used as given.
    Data,
    /// Everything else: I/O failures, optimizer breakdowns.
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // ---- ingestion ----
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("target has {0} distinct class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("target `{0}` looks continuous; only classification targets are supported")]
    RegressionTarget(String),
    #[error("no numeric feature columns remain after preprocessing")]
    NoNumericFeatures,
    #[error("class `{class}` has {count} member(s), fewer than k = {k}")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    // ---- encodings / statistics ----
    #[error("feature vector is empty")]
    EmptyFeature,
    #[error("histogram needs at least 2 bins, got {0}")]
    BadBins(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("exhaustive search supports at most {max} samples, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("sample has zero variance")]
    DegenerateSample,
    #[error("transform output contains non-finite values")]
    NonFiniteTransformOutput,

    // ---- transforms ----
    #[error("unknown transform `{0}`")]
    UnknownTransform(String),
    #[error("a bare feature reference is not a generated feature")]
    NotGenerated,
    #[error("expression references unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("cannot parse expression: {0}")]
    ExprParse(String),

    // ---- recommendation matrix ----
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("recommendation matrix has no records of the requested kind")]
    EmptyTrm,
    #[error("configuration mismatch: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("unsupported file format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: String },
    #[error("corrupt file: {0}")]
    CorruptFile(String),

    // ---- causal selection ----
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("structure learning did not converge (h = {h:e})")]
    NonConvergence { h: f64, last: Box<WeightedDag> },
    #[error("selection fraction must lie in (0, 1], got {0}")]
    BadThreshold(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            BadFoldCount(_) | BadBins(_) | UnknownTransform(_) | ConfigMismatch { .. }
            | VersionMismatch { .. } | BadThreshold(_) | InvalidConfig(_) | ExprParse(_) => {
                ErrorClass::Config
            }
            MissingTarget(_) | Parse { .. } | TooFewClasses(_) | RegressionTarget(_)
            | NoNumericFeatures | ClassTooSmall { .. } | InvalidDataset(_) | EmptyFeature
            | LengthMismatch { .. } | TooFewSamples { .. } | TooLarge { .. } | DegenerateSample
            | NonFiniteTransformOutput | NotGenerated | UnknownFeature(_) | EmptyCorpus
            | EmptyTrm | CorruptFile(_) => ErrorClass::Data,
            Io { .. } | NonSquare { .. } | NonConvergence { .. } => ErrorClass::Internal,
        }
    }
}
