//! Analytical latency predictor.
//!
//! A block is lowered to operator workloads. Each workload's output is
//! split into power-of-two tiles that are dealt to the processing engines
//! in waves; a tile costs its data movement (off-chip to on-chip once, then
//! on-chip to PE-local per tile) plus its share of the arithmetic. The
//! cheapest tile shape is kept per workload and the block latency is the
//! sum over workloads plus a constant per-block overhead.

mod predict;
mod tile;
mod workload;

pub use predict::{
    ablate_fusion, compute_latency, data_latency, evaluate_tile, predict_block,
    predict_block_with, search_schedule, search_schedule_sequential, static_latency,
    BlockPrediction, LatencyBreakdown, SchedulePlan, ScheduledWorkload,
};
pub use tile::{enumerate_tile_shapes, pow2_upto, search_tile_shapes, Dims, TileShape};
pub use workload::{
    block_workloads, block_workloads_with, ChannelMaskerKind, FusionFlags, InputAccess, OpKind,
    Workload, WorkloadOptions,
};
