//! Forward and backward passes for every layer primitive of the network.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod loss;
mod pool;

use serde::{Deserialize, Serialize};

pub use activation::{relu_backward, relu_forward};
pub use batchnorm::{
    BatchNorm, BatchNormCache, BatchNormGrads, BatchNormParams, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
pub use conv::{Conv2d, ConvGrads, ConvParams, Depthwise3x3, Dwsc, DwscGrads, DwscParams};
pub use dense::{Dense, DenseGrads};
pub use loss::{softmax, softmax_cce, CceOutput};
pub use pool::{
    avg2max_backward, avg2max_forward, global_avg_pool, global_avg_pool_backward, ArgMax, Pool2d,
};

/// Batch-norm behaviour: batch statistics (train) or running statistics (infer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}
