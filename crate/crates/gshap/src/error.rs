use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("player count {0} exceeds the 63-player coalition capacity")]
    PlayerCapacity(usize),

    #[error(
        "exact enumeration over {players} players refused (cap is {cap}); \
         group the features and explain the groups instead"
    )]
    EnumerationCap { players: usize, cap: usize },

    #[error("coalition size {size} is out of range for {players} players")]
    WeightDomain { size: usize, players: usize },

    #[error("partition group '{group}' is empty")]
    PartitionEmptyGroup { group: String },

    #[error("partition group '{group}' lists feature {feature} twice or it overlaps group '{other}'")]
    PartitionOverlap {
        feature: usize,
        group: String,
        other: String,
    },

    #[error("partition does not cover feature {feature} (feature count is {m})")]
    PartitionGap { feature: usize, m: usize },

    #[error("partition group '{group}' lists feature {feature}, outside 0..{m}")]
    PartitionIndexRange {
        feature: usize,
        group: String,
        m: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correlation {0} is outside [-1, 1]")]
    CorrelationRange(f64),

    #[error("covariance is not symmetric: |S[{i},{j}] - S[{j},{i}]| = {delta:.3e}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },

    #[error(
        "covariance is not positive semi-definite: min eigenvalue {min_eig:.6e} \
         (max {max_eig:.6e}); enable repair to clip negative eigenvalues"
    )]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error(
        "conditioning block for coalition {coalition} is numerically singular \
         (condition number ~ {cond:.3e})"
    )]
    SingularBlock { coalition: String, cond: f64 },

    #[error("model is numerically constant under the sampling distribution (sd = {sd:.3e})")]
    DegenerateModel { sd: f64 },

    #[error("{op} requires a group-separable model and independent groups: {reason}")]
    ConditionsNotSatisfied { op: &'static str, reason: String },

    #[error("invalid JSON spec: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user input (CLI exit code 2),
    /// false for runtime/numerical failures (exit code 1).
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::SingularBlock { .. } | Error::DegenerateModel { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
