//! Differentiable primitive layers with hand-derived backward passes.
//!
//! Every function here is pure: it reads immutable inputs and returns freshly
//! allocated outputs, so any of them may be called from several workers at
//! once.

pub mod activation;
pub mod conv;
pub mod gemm;
pub mod linear;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_with, conv2d_padded, conv_output_size,
    conv_output_size_padded, ConvGrads, Padding,
};
pub use linear::{linear, linear_backward, linear_dims, LinearGrads};
pub use loss::{argmax, softmax_cross_entropy};
pub use pool::{global_avg_pool, global_avg_pool_backward, subsample, subsample_backward};
