use thiserror::Error;

/// Errors produced across the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: grade {value} outside 0..=3")]
    GradeRange { line: usize, value: String },

    #[error("line {line}: conflicting entry for topic {topic}, doc {doc}")]
    Conflict { line: usize, topic: String, doc: String },

    #[error("line {line}: run tag {found:?} differs from {expected:?}")]
    MixedTags {
        line: usize,
        expected: String,
        found: String,
    },

    #[error("run file contains no entries")]
    EmptyRun,

    #[error("invalid identifier {0:?}")]
    InvalidId(String),

    #[error("invalid grade: {0}")]
    InvalidGrade(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("run {tag:?} shares no topics with the judgments")]
    NoOverlap { tag: String },

    #[error("undefined agreement: {0}")]
    UndefinedAgreement(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("enumeration of {0} too large; use sampling instead")]
    EnumerationTooLarge(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
