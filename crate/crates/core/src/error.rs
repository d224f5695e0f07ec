use thiserror::Error;

/// Errors produced by model construction, solvers, estimators and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("{what} at {index} is not a probability distribution: sums to {sum}")]
    InvalidDistribution {
        what: String,
        index: String,
        sum: f64,
    },

    #[error("{what} at {index} has negative entry {value}")]
    NegativeEntry {
        what: String,
        index: String,
        value: f64,
    },

    #[error("mean reward at (s={state}, a={action}) is {value}, must lie in [0, 1]")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("{what} {value} out of range (max {max}) at {location}")]
    IndexOutOfRange {
        what: String,
        value: usize,
        max: usize,
        location: String,
    },

    #[error("dataset must contain at least one episode")]
    EmptyDataset,

    #[error("instance too large for oracle: {size:.3e} trajectories exceeds cap {cap:.3e}")]
    InstanceTooLarge { size: f64, cap: f64 },

    #[error("target feature is not in the convex hull of the anchor features (residual {residual:.3e} above {tolerance:.1e})")]
    NotInConvexHull { residual: f64, tolerance: f64 },

    #[error("anchor pair (s={state}, a={action}) has no visits; anchor coverage is required")]
    UnvisitedAnchor { state: usize, action: usize },

    #[error("invalid parameter {name} = {value}: {requirement}")]
    InvalidParameter {
        name: String,
        value: f64,
        requirement: String,
    },

    #[error("instance does not certify a bounded total reward; this check is only valid on bounded-total-reward instances")]
    UnboundedRewardInstance,

    #[error("values must lie in [0, 1]: found {value} at {location}")]
    ValueOutOfRange { value: f64, location: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
