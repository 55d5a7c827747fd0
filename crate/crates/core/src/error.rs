use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by panel construction, estimation, and resampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("panel has no estimators")]
    EmptyPanel,

    #[error("panel fields have mismatched lengths: {0}")]
    LengthMismatch(String),

    #[error("variance {value} at index {index} is not strictly positive")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("tau2 must be nonnegative, got {0}")]
    NegativeTau2(f64),

    #[error("tau2 must be strictly positive, got {0}")]
    NonPositiveTau2(f64),

    #[error("at least two estimators are required, got {0}")]
    NeedsTwoEstimators(usize),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("panel carries no influence matrix")]
    MissingInfluence,

    #[error("weak instrument for {context}: first-stage measure {value:.3e} below threshold {threshold:.3e}")]
    WeakInstrument {
        context: String,
        value: f64,
        threshold: f64,
    },

    #[error("insufficient local data at site {site}: {found} observations on the {side} side, need {needed}")]
    InsufficientLocalData {
        site: usize,
        side: &'static str,
        found: usize,
        needed: usize,
    },

    #[error("environment {0} has no usable observations")]
    EmptyEnvironment(usize),

    #[error("group {0} is empty")]
    EmptyGroup(String),

    #[error("treatment arm {arm} in environment {env} is empty")]
    EmptyArm { env: usize, arm: u8 },

    #[error("propensity {propensity} at row {index} outside ({delta}, {one_minus_delta})")]
    PositivityViolation {
        index: usize,
        propensity: f64,
        delta: f64,
        one_minus_delta: f64,
    },

    #[error("every candidate IV subset was excluded as weak or degenerate")]
    AllSubsetsWeak,

    #[error("subsampling unstable: {failed} of {total} replicates failed")]
    SubsampleInstability { failed: usize, total: usize },

    #[error("pipeline failed on subsample {replicate}: {message}")]
    PipelineFailure { replicate: usize, message: String },

    #[error("panel too small for a split: J = {j}, need at least {needed}")]
    PanelTooSmall { j: usize, needed: usize },

    #[error("calibration quantile infeasible: index {needed} exceeds {available} scores")]
    QuantileInfeasible { needed: usize, available: usize },

    #[error("interval width must be positive and finite")]
    ZeroWidth,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
