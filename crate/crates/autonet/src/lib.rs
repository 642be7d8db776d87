//! Small `f64` tensor engine: the layers a pix2pix-style conditional GAN
//! needs, each with an explicit backward pass, plus Adam, a central-difference
//! gradient checker and a checkpoint container.
//!
//! Tensors are `(batch, channels, height, width)`; padding is zero padding
//! everywhere; weights are initialized from `N(0, 0.02^2)`.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod norm;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use activation::{sigmoid, Activation, LEAKY_SLOPE};
pub use adam::{AdamConfig, AdamState};
pub use conv::{Conv2d, ConvGrads, ConvTranspose2d};
pub use error::{Error, Result};
pub use gradcheck::{grad_check, grad_check_at, GradCheckReport};
pub use norm::InstanceNorm;
pub use tensor::{concat_channels, split_channels, Tensor};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Tag recorded for each layer in checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    InstanceNorm,
    LeakyRelu,
    Relu,
    Tanh,
    Sigmoid,
    ConcatSkip,
}
