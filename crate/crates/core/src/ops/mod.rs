//! Layer primitives. Each forward function is pure; each backward function
//! returns the input gradient and the parameter gradients separately.

pub mod activation;
pub mod batchnorm;
pub mod concat;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward};
pub use batchnorm::{batchnorm, batchnorm_backward, BatchNormParams, BnCache, BnGrads, Mode};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d, conv2d_backward, conv_out_dim, ConvGrads, ConvParams};
pub use linear::{fully_connected, fully_connected_backward, LinearGrads, LinearParams};
pub use loss::{argmax_rows, softmax, softmax_cross_entropy};
pub use pool::{avgpool, avgpool_backward, maxpool, maxpool_backward, pool_out_dim, PoolGeometry};
