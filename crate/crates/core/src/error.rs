use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report. Variant names mirror the error
/// classes the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("length mismatch at line {line}: {tokens} tokens vs {labels} labels")]
    LengthMismatch { line: usize, tokens: usize, labels: usize },

    #[error("alignment error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Alignment { line: Option<usize>, message: String },

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("range error: {0}")]
    Range(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("disfluency budget {budget:.4} unreachable: achieved {achieved:.4}")]
    BudgetUnreachable { budget: f64, achieved: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("numeric error at training step {step}: {message}")]
    TrainingDiverged { step: usize, message: String },

    #[error("empty batch: {0}")]
    EmptyBatch(String),

    #[error("vocabulary mismatch: checkpoint expects {expected}, got {actual}")]
    VocabMismatch { expected: String, actual: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable upper-case name of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format { .. } => "FORMAT_ERROR",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::Alignment { .. } => "ALIGNMENT_ERROR",
            Error::InvalidSentence(_) => "INVALID_SENTENCE",
            Error::Io { .. } => "IO_ERROR",
            Error::Range(_) => "RANGE_ERROR",
            Error::Precondition(_) => "PRECONDITION_ERROR",
            Error::Lexicon(_) => "LEXICON_ERROR",
            Error::BudgetUnreachable { .. } => "BUDGET_UNREACHABLE",
            Error::Shape(_) => "SHAPE_ERROR",
            Error::Numeric(_) | Error::TrainingDiverged { .. } => "NUMERIC_ERROR",
            Error::EmptyBatch(_) => "EMPTY_BATCH",
            Error::VocabMismatch { .. } => "VOCAB_MISMATCH",
            Error::Checkpoint(_) => "CHECKPOINT_ERROR",
            Error::Config(_) => "CONFIG_ERROR",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn alignment(message: impl Into<String>) -> Self {
        Error::Alignment {
            line: None,
            message: message.into(),
        }
    }
}
