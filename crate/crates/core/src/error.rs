use thiserror::Error;

/// Errors raised while configuring, loading, or running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    /// A tunable or argument is out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A required input column is missing from a trip file.
    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    /// Argument violates an operation precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// The regression has no usable variance in its regressor.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Process logic reached a state the model forbids. Aborts the run.
    #[error("internal consistency error at t={time}: {message}")]
    Consistency { time: f64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub(crate) fn consistency(time: f64, message: impl Into<String>) -> Self {
        SimError::Consistency {
            time,
            message: message.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
