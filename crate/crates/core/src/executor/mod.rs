//! Dense reference executor for masked bottleneck blocks.
//!
//! Everything is `f64` and single-threaded with a fixed summation order, so
//! results replay bit for bit. The sparse pipeline (gather, convolve,
//! scatter) is checked against the dense forward pass with the masks
//! multiplied in.

mod block;
mod conv;
mod gumbel;
mod mask;
mod tensor;
pub mod vectors;

pub use block::{
    block_forward_dense, block_forward_dense_masked, block_forward_sparse,
    block_forward_sparse_with, shortcut, BlockWeights, SparseOptions,
};
pub use conv::{conv2d_channel_subset, conv2d_direct, conv2d_valid, weight_len};
pub use gumbel::{decide, gumbel_sample, hard_keep, sigmoid, soft_keep, MaskMode};
pub use mask::{
    adaptive_avg_pool, channel_masker_forward, dilate, dilate_and_rates,
    fused_masker_weight_identity, spatial_masker_forward, spatial_masker_on_grid, BlockMasks,
    ChannelMask, ChannelMaskerOutput, ChannelMaskerWeights, GatherPlan, SpatialMask,
    SpatialMaskerOutput, SpatialMaskerWeights,
};
pub use tensor::Tensor;
