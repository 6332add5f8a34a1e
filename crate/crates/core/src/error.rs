use thiserror::Error;

use crate::dyadic::DyadicInterval;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation requires a nonempty collection")]
    EmptyCollection,

    #[error("operation requires a nonempty input collection D(I)")]
    EmptyInput,

    #[error("{search} at depth {depth} needs {required} candidates, over the budget of {budget}")]
    DepthTooLarge {
        search: &'static str,
        depth: u32,
        required: String,
        budget: u64,
    },

    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: u32, right: u32 },

    #[error("normalization mismatch: expected {expected}, found {found}")]
    NormalizationMismatch { expected: String, found: String },

    #[error("interval {interval} is not contained in root {root}")]
    RootViolation {
        root: DyadicInterval,
        interval: DyadicInterval,
    },

    #[error("interval {interval} has level above the depth bound {depth}")]
    LevelExceedsDepth { interval: DyadicInterval, depth: u32 },

    #[error("coefficient series is identically zero")]
    ZeroSeries,

    #[error("K = {k} does not exceed M(M+1) = {bound}; the stopping-time construction need not terminate")]
    NonContraction { k: String, bound: String },

    #[error("permutation is not level preserving")]
    NotLevelPreserving,

    #[error("invalid dyadic address {0:?}")]
    InvalidAddress(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid rational {0:?}")]
    InvalidRational(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by an enumeration budget rather than bad input.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::DepthTooLarge { .. })
    }
}
