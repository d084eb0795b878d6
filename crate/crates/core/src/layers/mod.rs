//! Forward and backward passes for every layer type of the network.

mod concat;
mod conv;
mod dropout;
pub(crate) mod im2col;
mod pool;
mod prelu;
mod upsample;

pub use concat::{concat_channels, split_channels};
pub use conv::{conv_backward, conv_forward, deconv_backward, deconv_forward, transpose_io, ConvSpec};
pub use dropout::{apply_mask, dropout_backward, Dropout};
pub use pool::{max_pool_backward, max_pool_forward, PoolSpec};
pub use prelu::{prelu_backward, prelu_forward};
pub use upsample::{bilinear_upsample_backward, bilinear_upsample_forward};
