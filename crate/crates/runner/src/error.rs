use argqual_nn::NnError;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] argqual_core::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn is_config(&self) -> bool {
        use argqual_core::Error as C;
        matches!(
            self,
            RunError::Config(_)
                | RunError::Core(C::Config(_))
                | RunError::Nn(NnError::Config(_) | NnError::UnregisteredTask(_) | NnError::Core(C::Config(_)))
        )
    }

    /// 2 for invalid configuration, 1 for anything that failed at run time.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            1
        }
    }
}
