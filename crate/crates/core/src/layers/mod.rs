//! Forward and backward kernels for every layer used by the networks.
//!
//! All kernels take `batch × channels × length` tensors. Each backward
//! is checked against central differences in the unit tests below each kernel.

mod activation;
mod batchnorm;
mod conv;
mod pool;

pub use activation::{dense_backward, dense_forward, relu, relu_backward, softmax, softmax_backward, DenseGrads};
pub use batchnorm::{
    batchnorm, batchnorm_eval_backward, batchnorm_eval_forward, batchnorm_train_backward,
    batchnorm_train_forward, update_running_stats, BatchNormParams, BnCache, BnMode, BN_EPSILON,
    BN_MOMENTUM,
};
pub use conv::{conv1d, conv1d_backward, conv1d_forward, conv_output_len, Conv1dGrads, Conv1dParams, Padding};
pub use pool::{maxpool1d, maxpool1d_backward, pool_output_len, unpool1d, unpool1d_backward, PoolRecord};
