use thiserror::Error;

/// Errors raised across the planning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("unknown axis `{0}`")]
    UnknownAxis(String),

    #[error("duplicate axis `{0}`")]
    DuplicateAxis(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("row {row} of `{table}` sums to {sum} (expected 1 within {tolerance:e})")]
    RowNotNormalized {
        table: String,
        row: String,
        sum: f64,
        tolerance: f64,
    },

    #[error("divergence undefined: p has mass at outcome {index} where q has none")]
    DivergenceUndefined { index: usize },

    #[error("conditioning on a zero-probability event: {0}")]
    ZeroMass(String),

    #[error("policy space too large: {count} policies exceeds the cap of {cap}")]
    PolicySpaceTooLarge { count: u128, cap: usize },

    #[error("observation {observation} is impossible after action {action}")]
    ImpossibleObservation { action: usize, observation: usize },

    #[error("action {action} does not start any allowable policy")]
    ActionNotAllowed { action: usize },

    #[error("risk undefined for policy {policy}: state trajectory {trajectory:?} has no preference mass")]
    RiskUndefined {
        policy: usize,
        trajectory: Vec<usize>,
    },

    #[error("pragmatic cost undefined for policy {policy}: observation trajectory {trajectory:?} has no preference mass")]
    PragmaticCostUndefined {
        policy: usize,
        trajectory: Vec<usize>,
    },

    #[error("complexity undefined for policy {policy}: {detail}")]
    ComplexityUndefined { policy: usize, detail: String },

    #[error("free energy undefined at {0}")]
    VfeUndefined(String),

    #[error("posterior puts mass on an undefined conditional slice: {0}")]
    UndefinedSlice(String),

    #[error("free energy became non-finite at sweep {sweep}")]
    Diverged { sweep: usize },

    #[error("oracle problem too large: {tuples} outcome tuples exceeds {cap}")]
    OracleTooLarge { tuples: u128, cap: u128 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
