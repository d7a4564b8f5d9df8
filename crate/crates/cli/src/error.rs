use std::path::PathBuf;

use fragility::cascade::CascadeError;
use fragility::exposure::PanelError;
use fragility::inference::InferenceError;
use fragility::network::NetworkError;
use fragility::spectral::SpectralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    BadInput { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("writing {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("serializing {what}: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 for computation errors, 2 for I/O, malformed input and configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::BadInput { .. } | CliError::Config(_) => 2,
            CliError::Csv { .. } | CliError::Json { .. } => 2,
            CliError::Panel(e) => match e {
                PanelError::TooFewBanks { .. } => 1,
                _ => 2,
            },
            CliError::Network(e) => match e {
                NetworkError::Csv(_) | NetworkError::Json(_) | NetworkError::EdgeList(_) => 2,
                _ => 1,
            },
            CliError::Cascade(e) => match e {
                CascadeError::Scenario(_) | CascadeError::UnknownBank(_) | CascadeError::MissingCapital(_) => 2,
                _ => 1,
            },
            CliError::Validation(_) | CliError::Spectral(_) | CliError::Inference(_) => 1,
        }
    }
}
