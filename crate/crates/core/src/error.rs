use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix is rank deficient at column {column} (pivot {pivot:e})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("penalty too aggressive: the thresholded {factor} factor lost rank (lambda = {lambda})")]
    PenaltyTooAggressive { factor: char, lambda: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("factor is not column-orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("degenerate variance estimate {value:e}; the statistic cannot be studentized")]
    DegenerateVariance { value: f64 },

    #[error("every tuning grid point failed")]
    AllGridPointsFailed,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input format error: {0}")]
    Format(String),

    #[error("at K = {k}: {source}")]
    AtRank {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Strips any `AtRank` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtRank { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.root(), Error::DegenerateVariance { .. })
    }

    /// True for problems with external input (files, shapes, formats).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Format(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::NonFinite { .. }
                | Error::ShapeMismatch { .. }
        )
    }
}
