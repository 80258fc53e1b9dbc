use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array spec: {0}")]
    InvalidSpec(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("signal length must be odd, got {0}")]
    EvenLength(usize),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {name}={value} outside [{lo}, {hi}]")]
    IndexOutOfRange {
        name: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("dense construction of {rows}x{cols} exceeds the size guard of {cap} entries")]
    SizeGuard { rows: usize, cols: usize, cap: usize },

    #[error("physical target outside the admissible delay-Doppler box: {coord}={value} (limit {limit})")]
    BoxConstraint {
        coord: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("angle parameter beta={0} has no real angle")]
    NoRealAngle(f64),

    #[error("could not draw a separated scene within {0} tries")]
    MaxTriesExhausted(usize),

    #[error("system is rank deficient (condition estimate {0:.3e})")]
    RankDeficient(f64),

    #[error("interpolation system is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("covariance factorization failed after escalating diagonal loading to {0:.3e}")]
    CovarianceSolve(f64),

    #[error("cannot add noise to an all-zero signal")]
    ZeroSignal,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
