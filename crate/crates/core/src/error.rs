use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("re-entry at t = {epoch:.3} s (altitude {altitude_m:.0} m)")]
    Reentry { epoch: f64, altitude_m: f64 },

    #[error("propagation diverged at t = {epoch:.3} s")]
    Divergence { epoch: f64 },

    #[error("degenerate state: position and velocity do not span an orbital plane")]
    SingularFrame,

    #[error("covariance is not positive definite: {0}")]
    Covariance(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("track has {got} plots, at least {needed} required")]
    TooFewPlots { got: usize, needed: usize },

    #[error("long smoothing refused: a manoeuvre was declared on this track")]
    SmoothingRefused,

    #[error("no radar passes in the scenario span")]
    NoPasses,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time format: {0}")]
    Time(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("toml: {0}")]
    TomlWrite(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
