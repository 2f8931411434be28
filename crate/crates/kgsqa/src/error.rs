//! Crate-wide error type with pipeline stage attribution.

use thiserror::Error;

/// Pipeline stage names, used to attribute errors to the sub-task that
/// produced them (mention detection, candidate generation, relation
/// prediction, answer selection).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    MentionDetection,
    CandidateGeneration,
    RelationPrediction,
    AnswerSelection,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::MentionDetection => "MD",
            Stage::CandidateGeneration => "CG",
            Stage::RelationPrediction => "RP",
            Stage::AnswerSelection => "AS",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}:{line}: unknown {kind} `{id}`")]
    Referential {
        kind: &'static str,
        id: String,
        path: String,
        line: usize,
    },

    #[error("relation label `{0}` has no '.' separator")]
    RelationLabelFormat(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("invalid span {start}..={end} for sequence of length {len}")]
    InvalidSpan {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("no answer: {0}")]
    NoAnswer(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("target-domain contamination: {0}")]
    Contamination(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Whether this error is a validation problem (bad input, bad config,
    /// violated precondition) as opposed to a runtime failure. Drives the
    /// CLI exit code: 1 for validation, 2 for runtime.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Referential { .. }
            | Error::RelationLabelFormat(_)
            | Error::EmptyInput(_)
            | Error::DimensionMismatch(_)
            | Error::ZeroVector
            | Error::InvalidSpan { .. }
            | Error::Contamination(_)
            | Error::Config(_)
            | Error::Invalid(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}
