//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: it provides exactly the primitives the
//! guided super-resolution network and its classical solver need
//! (convolutions, batched matrix products, softmax, resampling, elementwise
//! algebra) together with a tape-free dynamic graph for gradients.
//!
//! Image tensors use the `[batch, channel, height, width]` layout throughout.

mod element;
mod error;
pub mod gradcheck;
pub mod init;
pub mod ops;
mod params;
mod tensor;

pub use element::{DType, Element};
pub use error::{Result, TensorError};
pub use ops::conv::{conv2d, conv2d_transpose, conv2d_transpose_sized, conv_output_dim};
pub use ops::matmul::matmul;
pub use ops::resize::{bicubic_resize, bilinear_resize};
pub use ops::shape::concat_channels;
pub use ops::unary::Activation;
pub use params::{ParamStore, Parameter};
pub use tensor::{is_grad_enabled, no_grad, Tensor};
