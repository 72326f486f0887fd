use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Transmitter and receiver share a position; path loss is undefined.
    #[error("degenerate distance: receiver coincides with transmitter at ({x}, {y})")]
    DegenerateDistance { x: f64, y: f64 },

    #[error("coverage contour undefined at y = {y}: aggregate gain below threshold everywhere ahead of the relays")]
    ContourUndefined { y: f64 },

    #[error("no resolvable relay in previous hop")]
    NoResolvableRelay,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("distribution truncation exceeded support cap {cap} with tail mass {tail:e}")]
    Truncation { cap: usize, tail: f64 },

    #[error("recursion does not progress: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
