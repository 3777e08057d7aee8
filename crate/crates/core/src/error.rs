use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("device {device} has a zero-norm channel; the channel must be re-drawn")]
    DegenerateChannel { device: usize },

    #[error("device {device} needs P_min = {p_min} above P_max = {p_max}")]
    Infeasible { device: usize, p_min: f64, p_max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{n} devices exceed the exact-enumeration limit of {limit}")]
    TooManyDevices { n: usize, limit: usize },

    #[error("activity vector sums to zero; normalization is undefined")]
    ZeroActivity,

    #[error("greedy allocation needs (J-1)*K = {needed} devices but only {available} exist")]
    GreedyTooFewDevices { needed: usize, available: usize },

    #[error("power reduction raised device {device} from {before} to {after}")]
    MonotonicityViolation { device: usize, before: f64, after: f64 },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
