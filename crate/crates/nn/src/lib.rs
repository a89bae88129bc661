//! Minimal convolutional network building blocks for CPU training.
//!
//! Activations use a channel-major `(channels, batch, height, width)` layout so
//! that every convolution is a single GEMM over the whole batch and batch
//! normalization statistics are contiguous per channel. Each layer caches what
//! it needs during a [`Mode::Train`] forward pass and exposes a `backward`
//! that accumulates parameter gradients and returns the input gradient.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod optim;
mod param;
mod scalar;

pub use activation::LeakyRelu;
pub use batchnorm::BatchNorm;
pub use conv::{Conv2d, ConvTranspose2d};
pub use linear::Linear;
pub use optim::{Adam, AdamConfig, ReduceLrOnPlateau};
pub use param::Param;
pub use scalar::Scalar;

/// Activation tensor: `(channels, batch, height, width)`.
pub type Tensor<T> = ndarray::Array4<T>;

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, caches kept for `backward`.
    Train,
    /// Running statistics, nothing cached.
    Eval,
}
