use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("fit error: {message}")]
    Fit {
        message: String,
        /// Final objective value when an iterative solver gave up.
        objective: Option<f64>,
    },

    #[error("hyperparameter search failed: {0}")]
    Tune(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("gap of {len} minutes for vendor {vendor} between offsets {from} and {to}")]
    Gap {
        vendor: String,
        from: i64,
        to: i64,
        len: i64,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn fit(message: impl Into<String>) -> Self {
        Error::Fit {
            message: message.into(),
            objective: None,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by the engine itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Fit { .. } | Error::Simulation(_) | Error::Tune(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
