use smsnet_unet::UnetError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Unet(#[from] UnetError),
    #[error(transparent)]
    Sim(#[from] smsnet_sim::SimError),
    #[error(transparent)]
    Eval(#[from] smsnet_eval::EvalError),
    #[error(transparent)]
    Dti(#[from] smsnet_dti::DtiError),
    #[error(transparent)]
    Tensor(#[from] smsnet_tensor::TensorError),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    /// Process exit status: 2 for bad configuration, 3 for numerical
    /// failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use smsnet_sim::SimError;
        match self {
            TrainError::Config(_) | TrainError::Toml(_) => 2,
            TrainError::Unet(UnetError::Config(_)) => 2,
            TrainError::Sim(SimError::Parameter(_) | SimError::Split(_)) => 2,
            TrainError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
