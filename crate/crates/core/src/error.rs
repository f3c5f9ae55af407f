//! Crate-wide error type and exit-code classification.
//!
//! Every fallible operation in this crate returns [`Result`]. Errors carry
//! enough context (paths, line numbers, ids) to be actionable from a shell,
//! and each variant maps to one of three [`ErrorKind`] classes that the CLI
//! turns into process exit codes: usage errors (1), data errors (2), and
//! numerical failures (3).

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of an [`Error`], used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller asked for something malformed (bad flag value, bad config,
    /// inconsistent arguments). Exit code 1.
    Usage,
    /// The input data is unreadable or violates the documented formats.
    /// Exit code 2.
    Data,
    /// A numerical routine could not produce a finite, well-defined result.
    /// Exit code 3.
    Numerical,
}

impl ErrorKind {
    /// Process exit code for this class of failure.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

/// Everything that can go wrong in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure with the offending path attached.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A line of an input file does not match its documented format.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A JSON document (config, model file, trial history) failed to parse.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// An input that must contain at least one record is empty.
    #[error("{path}: empty input")]
    EmptyInput { path: String },

    /// A feature join found no value for a corpus id.
    #[error("missing feature '{feature}' for id {id}")]
    MissingFeature { feature: String, id: u64 },

    /// A feature file lists the same id twice.
    #[error("duplicate id {id} in feature '{feature}'")]
    DuplicateId { feature: String, id: u64 },

    /// A feature file lists an id that does not exist in the corpus.
    #[error("unknown id {id} in feature '{feature}' (not in corpus)")]
    UnknownId { feature: String, id: u64 },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Weight names and corpus feature names disagree.
    #[error("feature names do not match weights: missing {missing:?}, unexpected {extra:?}")]
    FeatureMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    /// Two models that must share vocabularies do not.
    #[error("vocabulary mismatch: {context}")]
    VocabMismatch { context: String },

    /// A caller-supplied argument or configuration value is invalid.
    #[error("{0}")]
    InvalidArgument(String),

    /// An operation was called before its inputs were prepared
    /// (e.g. selection before scores were computed).
    #[error("{0}")]
    InvalidState(String),

    /// A numerical routine failed (singular covariance, divergence, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Shorthand for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Shorthand for [`Error::Io`] with a path attached.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Which class of failure this is; drives the CLI exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Json { .. }
            | Error::EmptyInput { .. }
            | Error::MissingFeature { .. }
            | Error::DuplicateId { .. }
            | Error::UnknownId { .. }
            | Error::NonFinite { .. }
            | Error::FeatureMismatch { .. }
            | Error::VocabMismatch { .. } => ErrorKind::Data,
            Error::InvalidArgument(_) | Error::InvalidState(_) => ErrorKind::Usage,
            Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}
