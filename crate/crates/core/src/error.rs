use thiserror::Error;

/// Errors produced by model evaluation, estimation and data handling.
#[derive(Debug, Error)]
pub enum MblError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("singular system in block `{block}` after ridge repair")]
    Singular { block: String },

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("fit diverged after {} iterations", trace.len())]
    Diverged { trace: Vec<f64> },

    #[error("fit did not converge")]
    NotConverged,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MblError>;

impl MblError {
    /// True for failures of the numerical procedures rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, MblError::Singular { .. } | MblError::Diverged { .. } | MblError::NotConverged)
    }
}
