use std::path::PathBuf;

/// Errors raised by the simulation and audit routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("price {name}={value} is outside [0, 1]")]
    PriceOutOfRange { name: &'static str, value: f64 },

    #[error("bid {bid} exceeds ask {ask}")]
    CrossedQuote { bid: f64, ask: f64 },

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("perturbation (r={r}, eps={eps}) is not admissible")]
    InadmissiblePerturbation { r: f64, eps: f64 },

    #[error("spike index {k} is outside 1..={big_k}")]
    SpikeIndexOutOfRange { k: usize, big_k: usize },

    #[error("expected utility has no closed form for {0} environments")]
    NoClosedForm(&'static str),

    #[error("bandit reward {0} is outside [0, 1]")]
    RewardOutOfRange(f64),

    #[error("arm {arm} is out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("a bandit needs at least 2 arms, got {0}")]
    TooFewArms(usize),

    #[error("learner role mismatch: expected {expected}")]
    WrongRole { expected: &'static str },

    #[error("update called without a pending action")]
    NoPendingAction,

    #[error("length mismatch: {rounds} rounds but {utilities} utilities")]
    LengthMismatch { rounds: usize, utilities: usize },

    #[error("cannot fit scaling exponent: {0}")]
    Unfittable(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
