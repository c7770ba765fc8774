//! Fibonacci-Net: a from-scratch convolutional network whose block widths
//! follow the Fibonacci sequence, with Avg-2Max pooling inside parallel
//! concatenation blocks and a depthwise-separable tail.

pub mod data;
pub mod error;
pub mod explain;
pub mod layers;
pub mod metrics;
pub mod model;
mod real;
pub mod run;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{concat_channels, same_pad_geometry, Padding, PaddingGeometry, Shape, Tensor};
