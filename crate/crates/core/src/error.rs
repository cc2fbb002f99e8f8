use thiserror::Error;

/// Failures raised by the numeric kernels and the autodiff tape.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("index error: target {index} outside [0, {bound})")]
    Index { index: usize, bound: usize },
    #[error("empty loss: every position is ignored")]
    EmptyLoss,
    #[error("numeric error: non-finite value in {0}")]
    NonFinite(String),
}
