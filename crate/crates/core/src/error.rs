use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid corridor geometry: {0}")]
    Geometry(String),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("vehicle {0} is not idle at the terminus")]
    VehicleUnavailable(usize),
    #[error("simulation clock is past the horizon")]
    PastHorizon,
    #[error("episode is already done")]
    EpisodeDone,
    #[error("non-finite value during update: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing checkpoint for the RL zonal policy")]
    MissingCheckpoint,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short category label, used for CLI exit diagnostics and HTTP error bodies.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Geometry(_) | Error::Scenario(_) | Error::Toml(_) => "config",
            Error::UnknownNode(_) | Error::VehicleUnavailable(_) => "usage",
            Error::PastHorizon | Error::EpisodeDone => "state",
            Error::NonFinite(_) => "numeric",
            Error::Checkpoint(_) | Error::MissingCheckpoint => "checkpoint",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
