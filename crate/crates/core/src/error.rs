use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("r = {r} lies outside the tabulated flux range (0, {hi}]")]
    Extrapolation { r: f64, hi: f64 },

    #[error("invalid flux profile: {0}")]
    InvalidProfile(String),

    #[error("aliasing: n_theta = {n_theta} must be at least 4 * m_max = {}", 4 * .m_max)]
    Aliasing { n_theta: usize, m_max: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("seed has negligible component in the window subspace (projected norm {0:e})")]
    EmptyProjection(f64),

    #[error("no admissible weight parameters: {0}")]
    WeightConstruction(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("artifact verification failed: {0}")]
    Verify(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
