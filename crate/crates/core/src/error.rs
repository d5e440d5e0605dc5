use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input file header does not match the expected schema.
    #[error("schema mismatch: {0}")]
    Schema(String),
    /// A value is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),
    /// Model file cannot be loaded (version, shape, or content).
    #[error("model error: {0}")]
    Model(String),
    /// Bad runtime input (non-finite features, empty dataset, ...).
    #[error("input error: {0}")]
    Input(String),
    /// Referenced modem does not exist.
    #[error("unknown modem: {0}")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
