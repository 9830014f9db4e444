use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hardware::HardwareSpec;
use crate::model::{ActivationProfile, BlockSpec, DynamicConfig, ELEMENT_BYTES};

use super::tile::{search_tile_shapes, tiled_sum, TileShape};
use super::workload::{
    block_workloads_with, FusionFlags, InputAccess, Workload, WorkloadOptions,
};

const B: f64 = ELEMENT_BYTES as f64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyBreakdown {
    pub data_s: f64,
    pub compute_s: f64,
    pub const_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn new(data_s: f64, compute_s: f64, const_s: f64) -> Self {
        Self {
            data_s,
            compute_s,
            const_s,
            total_s: data_s + compute_s + const_s,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.data_s * k, self.compute_s * k, self.const_s * k)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.data_s + other.data_s,
            self.compute_s + other.compute_s,
            self.const_s + other.const_s,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulePlan {
    pub tile: TileShape,
    /// Zero only for an empty workload.
    pub tile_count: u64,
    pub waves: u64,
    pub predicted: LatencyBreakdown,
}

/// Input and weight elements moved on-chip to local memory, summed over all
/// tiles (halo overlap included).
fn per_tile_input_sum(w: &Workload, t: TileShape) -> f64 {
    let d = w.dims;
    let inputs = match w.access {
        InputAccess::Window { .. } => {
            let ch = tiled_sum(d.c, t.t_c, |tc| w.window_geometry(1, tc, 1, 1).unwrap()[1] as f64);
            let e1 = tiled_sum(d.s1, t.t_s1, |ts| w.window_geometry(1, 1, ts, 1).unwrap()[2] as f64);
            let e2 = tiled_sum(d.s2, t.t_s2, |ts| w.window_geometry(1, 1, 1, ts).unwrap()[3] as f64);
            d.p as f64 * ch * e1 * e2
        }
        InputAccess::Reduce {
            elements_per_item,
            shared_across_c,
        } => {
            let c_factor = if shared_across_c {
                d.c.div_ceil(t.t_c) as f64
            } else {
                d.c as f64
            };
            (d.p * d.s1 * d.s2) as f64 * c_factor * elements_per_item
        }
        InputAccess::Elementwise { operands } => d.numel() as f64 * operands as f64,
    };
    let epilogue = d.numel() as f64 * w.epilogue_operands as f64;
    let other_tiles = (d.p.div_ceil(t.t_p) * d.s1.div_ceil(t.t_s1) * d.s2.div_ceil(t.t_s2)) as f64;
    let weights = t.count(d) as f64 * w.weight_fixed as f64
        + other_tiles * d.c as f64 * w.weight_per_out_channel as f64;
    inputs + epilogue + weights
}

/// Off-chip to on-chip plus on-chip to PE-local movement, for inputs,
/// weights and outputs.
pub fn data_latency(w: &Workload, tile: TileShape, hw: &HardwareSpec) -> f64 {
    if w.dims.is_empty() {
        return 0.0;
    }
    let off = hw.offchip_bandwidth_bytes_per_s;
    let on = hw.onchip_bandwidth();
    let input = (w.input_bytes + w.weight_bytes) as f64 / off + per_tile_input_sum(w, tile) * B / on;
    let output = w.output_bytes as f64 / on + w.output_bytes as f64 / off;
    input + output
}

/// `waves * macs_per_tile / rate`, where a tile's MACs are those of a full
/// tile: a wave lasts as long as its busiest PE, so ragged edge tiles do
/// not shorten it. Equal to `macs / tile_count` when the tile divides the
/// dims.
pub fn compute_latency(w: &Workload, tile: TileShape, hw: &HardwareSpec) -> f64 {
    let count = tile.count(w.dims);
    if count == 0 || w.macs == 0 {
        return 0.0;
    }
    let d = w.dims;
    let full = (tile.t_p.min(d.p) * tile.t_c.min(d.c) * tile.t_s1.min(d.s1) * tile.t_s2.min(d.s2)) as f64;
    let per_tile = w.macs as f64 * full / d.numel() as f64;
    let waves = count.div_ceil(hw.pe_count as u64);
    waves as f64 * per_tile / hw.pe_mac_rate()
}

/// Latency of one candidate tile (no constant term).
pub fn evaluate_tile(w: &Workload, tile: TileShape, hw: &HardwareSpec) -> SchedulePlan {
    let tile_count = tile.count(w.dims);
    SchedulePlan {
        tile,
        tile_count,
        waves: tile_count.div_ceil(hw.pe_count as u64),
        predicted: LatencyBreakdown::new(data_latency(w, tile, hw), compute_latency(w, tile, hw), 0.0),
    }
}

fn better(a: SchedulePlan, b: SchedulePlan) -> SchedulePlan {
    match a.predicted.total_s.total_cmp(&b.predicted.total_s).then(a.tile.cmp(&b.tile)) {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

/// Best tile over all power-of-two candidates; ties go to the
/// lexicographically smallest tile. Candidates are evaluated in parallel
/// and reduced with a total order, so the result does not depend on the
/// evaluation order.
pub fn search_schedule(w: &Workload, hw: &HardwareSpec) -> SchedulePlan {
    let candidates = search_tile_shapes(w.dims);
    candidates
        .par_iter()
        .map(|&t| evaluate_tile(w, t, hw))
        .reduce_with(better)
        .unwrap_or(SchedulePlan {
            tile: TileShape::new(1, 1, 1, 1),
            tile_count: 0,
            waves: 0,
            predicted: LatencyBreakdown::default(),
        })
}

/// Sequential exhaustive search, kept as a reference for the parallel one.
pub fn search_schedule_sequential(w: &Workload, hw: &HardwareSpec) -> Option<SchedulePlan> {
    search_tile_shapes(w.dims)
        .into_iter()
        .map(|t| evaluate_tile(w, t, hw))
        .reduce(better)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduledWorkload {
    pub workload: Workload,
    pub plan: SchedulePlan,
    /// Plan latency weighted by the workload's execution probability.
    pub expected: LatencyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockPrediction {
    pub breakdown: LatencyBreakdown,
    pub static_breakdown: LatencyBreakdown,
    /// Dynamic over static latency.
    pub r_ell: f64,
    pub workloads: Vec<ScheduledWorkload>,
}

impl BlockPrediction {
    /// Tiles of all scheduled workloads, joined with `|`.
    pub fn tile_summary(&self) -> String {
        self.workloads
            .iter()
            .map(|s| s.plan.tile.to_string())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn total_waves(&self) -> u64 {
        self.workloads.iter().map(|s| s.plan.waves).sum()
    }
}

fn schedule_all(wls: Vec<Workload>, hw: &HardwareSpec) -> (LatencyBreakdown, Vec<ScheduledWorkload>) {
    let mut total = LatencyBreakdown::new(0.0, 0.0, hw.const_overhead_s);
    let mut out = Vec::with_capacity(wls.len());
    for w in wls {
        let plan = search_schedule(&w, hw);
        let expected = plan.predicted.scaled(w.expectation);
        total = total.add(&expected);
        out.push(ScheduledWorkload {
            workload: w,
            plan,
            expected,
        });
    }
    (total, out)
}

pub fn predict_block(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
    flags: FusionFlags,
    hw: &HardwareSpec,
    batch: usize,
) -> Result<BlockPrediction> {
    predict_block_with(block, cfg, prof, flags, hw, batch, &WorkloadOptions::default())
}

pub fn predict_block_with(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
    flags: FusionFlags,
    hw: &HardwareSpec,
    batch: usize,
    opts: &WorkloadOptions,
) -> Result<BlockPrediction> {
    hw.validate()?;
    let (breakdown, workloads) = schedule_all(block_workloads_with(block, cfg, prof, flags, batch, opts)?, hw);
    let static_breakdown = static_latency(block, hw, batch)?;
    if static_breakdown.total_s <= 0.0 {
        return Err(Error::DivisionByZero("static block latency is zero"));
    }
    Ok(BlockPrediction {
        breakdown,
        static_breakdown,
        r_ell: breakdown.total_s / static_breakdown.total_s,
        workloads,
    })
}

/// Latency of the block run densely, including the constant term.
pub fn static_latency(block: &BlockSpec, hw: &HardwareSpec, batch: usize) -> Result<LatencyBreakdown> {
    let wls = block_workloads_with(
        block,
        &DynamicConfig::static_block(),
        &ActivationProfile::full(),
        FusionFlags::NONE,
        batch,
        &WorkloadOptions::default(),
    )?;
    Ok(schedule_all(wls, hw).0)
}

/// One prediction per fusion combination, in [`FusionFlags::all_combinations`] order.
pub fn ablate_fusion(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
    hw: &HardwareSpec,
    batch: usize,
) -> Result<Vec<(FusionFlags, LatencyBreakdown)>> {
    FusionFlags::all_combinations()
        .into_iter()
        .map(|f| Ok((f, predict_block(block, cfg, prof, f, hw, batch)?.breakdown)))
        .collect()
}
