use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Variants are split into two families: contract violations (a value broke
/// an invariant the caller was supposed to uphold, or a numerical check
/// failed) and bad input (malformed files, out-of-range parameters). The CLI
/// maps the first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} exceeds the size cap of {cap}")]
    SizeCap { dim: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not unitary (max |MM^† - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("function is not a permutation")]
    NotPermutation,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("band condition violated at c[{x}][{y}] = {value}")]
    BandViolation { x: usize, y: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("term limit of {limit} exceeded")]
    TermLimit { limit: usize },

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error reflects a broken contract rather than bad input.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            Error::NotUnitary { .. }
                | Error::Numerical(_)
                | Error::Precondition(_)
                | Error::TermLimit { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
