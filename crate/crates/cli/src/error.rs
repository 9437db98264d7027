use llab_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact check failed: {0}")]
    Artifact(String),
}

impl CliError {
    /// 2 validation, 3 numerical failure, 4 I/O and artifact integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Io(_) | Self::Artifact(_) => 4,
            Self::Core(e) => match e {
                CoreError::NotConverged { .. }
                | CoreError::SingularOperator
                | CoreError::EigenFailure(_)
                | CoreError::NonPositiveLandscape { .. }
                | CoreError::NoFiniteConstant { .. }
                | CoreError::EmptySpectrum => 3,
                CoreError::Io(_) | CoreError::Format(_) | CoreError::ChecksumMismatch { .. } => 4,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            3 => "numerical",
            _ => "io",
        }
    }
}
