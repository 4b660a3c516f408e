use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("setting pair (x={x}, y={y}) has no counts")]
    ZeroSettingTotal { x: usize, y: usize },

    #[error("local benchmark {0} is degenerate (must lie strictly inside (0, 1))")]
    DegenerateBenchmark(f64),

    #[error("confidence level alpha={0} must lie in (0, 1)")]
    InvalidAlpha(f64),

    #[error("{strategies} deterministic strategies exceed the enumeration cap of {cap}")]
    EnumerationTooLarge { strategies: u128, cap: u64 },

    #[error("no crossover below n_max={0}")]
    NoCrossover(u64),

    #[error("distributions are identical; divergence is zero")]
    NoDivergence,

    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Errors in how the command was invoked.
    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::Usage(_))
    }

    /// Errors caused by malformed input, as opposed to numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::InvalidAlpha(_)
                | Error::ZeroSettingTotal { .. }
        )
    }
}
