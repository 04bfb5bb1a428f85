use thiserror::Error;

/// Errors produced by the simulator and its estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("timeline mismatch: {0}")]
    TimelineMismatch(String),

    #[error("empty sweep: scenario `{0}` needs at least one sweep point")]
    EmptySweep(String),

    #[error("delay scan too narrow: {0}")]
    ScanTooNarrow(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("config serialization error: {0}")]
    ConfigSer(#[from] toml::ser::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::TimelineMismatch(_) => "timeline_mismatch",
            Error::EmptySweep(_) => "empty_sweep",
            Error::ScanTooNarrow(_) => "scan_too_narrow",
            Error::FitFailed(_) => "fit_failed",
            Error::Config(_) | Error::ConfigSer(_) => "config",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
