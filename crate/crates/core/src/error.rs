use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to tag errors raised while fitting or scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Standardize,
    Bandwidth,
    Kernel,
    Decompose,
    Directions,
    DenominatorFloor,
    Outlyingness,
    Cutoff,
    Embed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Standardize => "standardize",
            Stage::Bandwidth => "bandwidth",
            Stage::Kernel => "kernel",
            Stage::Decompose => "decompose",
            Stage::Directions => "directions",
            Stage::DenominatorFloor => "denominator-floor",
            Stage::Outlyingness => "outlyingness",
            Stage::Cutoff => "cutoff",
            Stage::Embed => "embed",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum KodError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<KodError>,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("model file integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KodError {
    pub(crate) fn at(self, stage: Stage) -> KodError {
        KodError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The stage that raised this error, if it was tagged.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            KodError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, KodError>;
