use argqual_core::Task;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("tensor backend: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no head registered for task {0}")]
    UnregisteredTask(Task),
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error(transparent)]
    Core(#[from] argqual_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<safetensors::SafeTensorError> for NnError {
    fn from(e: safetensors::SafeTensorError) -> Self {
        NnError::Checkpoint(e.to_string())
    }
}

impl From<NnError> for argqual_core::Error {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Core(inner) => inner,
            NnError::Config(m) => argqual_core::Error::Config(m),
            NnError::UnregisteredTask(t) => argqual_core::Error::Config(format!("no head registered for task {t}")),
            NnError::Input(m) => argqual_core::Error::Input(m),
            other => argqual_core::Error::Backend(other.to_string()),
        }
    }
}
