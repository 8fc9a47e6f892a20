use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the rounding toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for ground set of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition system: {0}")]
    InvalidSystem(String),

    #[error("entry {index} = {value} lies outside [0, 1]")]
    OutOfBox { index: usize, value: f64 },

    #[error("block {block} sums to {sum}, expected 1")]
    BlockSum { block: usize, sum: f64 },

    #[error("t = {t} must exceed 12m = {}", 12 * .m)]
    ThresholdTooSmall { t: usize, m: usize },

    #[error("step direction has no moving coordinate")]
    UnboundedStep,

    #[error("step direction is pinned by coordinate {index} already at a bound")]
    PinnedStep { index: usize },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("{what} size {size} exceeds cap {cap}")]
    SizeCap {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("retry cap {cap} exceeded (best cost found {best_cost})")]
    RetryCap {
        cap: usize,
        best_cost: f64,
        best: Vec<usize>,
    },

    #[error("bundling invariant violated: {0}")]
    Bundling(String),

    #[error("no feasible sparsification leaf at this radius")]
    NoFeasibleLeaf,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("calibration fixture missing or unreadable at {path}: {reason}")]
    MissingFixture { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
