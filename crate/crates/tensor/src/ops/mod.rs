//! Differentiable operations.

pub mod binary;
pub mod conv;
pub mod matmul;
pub mod reduce;
pub mod resize;
pub mod shape;
pub mod softmax;
pub mod unary;
