use thiserror::Error;

/// Failures of the experiment runner, each with its own exit status.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("invalid override: {0}")]
    Override(String),
    #[error(transparent)]
    Svrp(#[from] svrp::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Data(_) => 3,
            LabError::Infeasible(_) => 4,
            LabError::Override(_) => 5,
            LabError::Svrp(svrp::Error::Infeasible(_)) => 4,
            LabError::Svrp(_) | LabError::Io(_) => 1,
        }
    }
}
