#[derive(Debug, thiserror::Error)]
pub enum DtiError {
    #[error("invalid diffusion protocol: {0}")]
    Protocol(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] smsnet_tensor::TensorError),
    #[error("png export: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, DtiError>;
