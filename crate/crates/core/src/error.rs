use thiserror::Error;

/// Errors surfaced by the auction library.
#[derive(Debug, Error)]
pub enum AuctionError {
    /// Invalid model or hyperparameter configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: shape mismatch, index out of range, empty input.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value appeared during numeric evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged (non-finite loss) at the given iteration.
    #[error("training diverged at iteration {iteration}: {detail}")]
    Training { iteration: u64, detail: String },

    /// Malformed checkpoint, dataset, or trace file.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
