use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flops::{block_flops_dynamic, block_flops_static, network_flops, FlopsBreakdown, NetworkFlopsReport};
use crate::hardware::HardwareSpec;
use crate::latency::{predict_block, FusionFlags, LatencyBreakdown};
use crate::model::{ActivationProfile, DynamicConfig, Paradigm};

use super::{GranularityPlan, NetworkSpec};

/// Activation rates for a network: one scalar broadcast to every block, or
/// one rate per block in execution order.
#[derive(Debug, Clone, PartialEq)]
pub enum Rates {
    Scalar(f64),
    PerBlock(Vec<f64>),
}

impl Rates {
    pub fn expand(&self, blocks: usize) -> Result<Vec<f64>> {
        match self {
            Rates::Scalar(r) => Ok(vec![*r; blocks]),
            Rates::PerBlock(v) if v.len() == blocks => Ok(v.clone()),
            Rates::PerBlock(v) => Err(Error::ProfileCountMismatch {
                expected: blocks,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub id: String,
    pub stage: usize,
    pub index: usize,
    pub config: DynamicConfig,
    pub profile: ActivationProfile,
    pub latency: LatencyBreakdown,
    pub static_latency: LatencyBreakdown,
    pub r_ell: f64,
    pub flops_static: FlopsBreakdown,
    pub flops_dynamic: FlopsBreakdown,
}

/// Whole-network prediction. Latencies cover the residual blocks; the stem
/// and classifier are static and identical in both variants, so they are
/// left out of the latency ratio. FLOPs include them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkReport {
    pub blocks: Vec<BlockReport>,
    pub total: LatencyBreakdown,
    pub static_total: LatencyBreakdown,
    pub r_ell: f64,
    pub batch: usize,
    pub per_image_s: f64,
    pub flops: NetworkFlopsReport,
}

pub fn predict_network(
    net: &NetworkSpec,
    plan: Option<&GranularityPlan>,
    paradigm: Paradigm,
    rates: &Rates,
    flags: FusionFlags,
    hw: &HardwareSpec,
    batch: usize,
) -> Result<NetworkReport> {
    let blocks = net.blocks()?;
    let rates = rates.expand(blocks.len())?;
    let configs = net.block_configs(paradigm, plan)?;
    let profiles = blocks
        .iter()
        .zip(&configs)
        .zip(&rates)
        .map(|((b, cfg), &r)| ActivationProfile::from_rate(&b.spec, cfg, r))
        .collect::<Result<Vec<_>>>()?;

    let reports = blocks
        .par_iter()
        .zip(configs.par_iter())
        .zip(profiles.par_iter())
        .map(|((b, cfg), prof)| {
            let pred = predict_block(&b.spec, cfg, prof, flags, hw, batch)?;
            Ok(BlockReport {
                id: b.id(),
                stage: b.stage,
                index: b.index,
                config: *cfg,
                profile: *prof,
                latency: pred.breakdown,
                static_latency: pred.static_breakdown,
                r_ell: pred.r_ell,
                flops_static: block_flops_static(&b.spec)?,
                flops_dynamic: block_flops_dynamic(&b.spec, cfg, prof)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let total = reports
        .iter()
        .fold(LatencyBreakdown::default(), |acc, r| acc.add(&r.latency));
    let static_total = reports
        .iter()
        .fold(LatencyBreakdown::default(), |acc, r| acc.add(&r.static_latency));
    if static_total.total_s <= 0.0 {
        return Err(Error::DivisionByZero("static network latency is zero"));
    }
    Ok(NetworkReport {
        r_ell: total.total_s / static_total.total_s,
        per_image_s: total.total_s / batch as f64,
        flops: network_flops(net, &configs, &profiles)?,
        blocks: reports,
        total,
        static_total,
        batch,
    })
}

/// What a sweep iterates over besides the rate.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    /// One block, one granularity per point (ignored for layer and static).
    Block {
        stage: usize,
        index: usize,
        granularities: Vec<usize>,
    },
    /// The whole network, one plan per point.
    Network { plans: Vec<GranularityPlan> },
}

#[derive(Debug, Clone)]
pub struct SweepRequest<'a> {
    pub net: &'a NetworkSpec,
    pub paradigm: Paradigm,
    pub grid: SweepGrid,
    pub rates: Vec<f64>,
    pub flags: FusionFlags,
    pub hw: &'a HardwareSpec,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub net: String,
    pub device: String,
    pub paradigm: Paradigm,
    pub stage: String,
    pub block: String,
    #[serde(rename = "S")]
    pub s: String,
    #[serde(rename = "G")]
    pub g: String,
    pub r: f64,
    pub batch: usize,
    pub flops_ratio: f64,
    pub r_ell: f64,
    pub total_us: f64,
}

impl SweepRow {
    pub const HEADER: [&'static str; 12] = [
        "net", "device", "paradigm", "stage", "block", "S", "G", "r", "batch", "flops_ratio", "r_ell", "total_us",
    ];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.net.clone(),
            self.device.clone(),
            self.paradigm.to_string(),
            self.stage.clone(),
            self.block.clone(),
            self.s.clone(),
            self.g.clone(),
            format!("{:.4}", self.r),
            self.batch.to_string(),
            format!("{:.6}", self.flops_ratio),
            format!("{:.6}", self.r_ell),
            format!("{:.4}", self.total_us),
        ]
    }
}

fn split_granularity(paradigm: Paradigm, text: String) -> (String, String) {
    match paradigm {
        Paradigm::Spatial => (text, String::new()),
        Paradigm::Channel => (String::new(), text),
        _ => (String::new(), String::new()),
    }
}

/// Rows ordered by granularity (or plan), then rate, in the given order.
pub fn sweep(req: &SweepRequest<'_>) -> Result<Vec<SweepRow>> {
    if req.rates.is_empty() {
        return Err(Error::invalid("sweep needs at least one rate"));
    }
    let has_gran = matches!(req.paradigm, Paradigm::Spatial | Paradigm::Channel);
    let mut points: Vec<(Option<usize>, Option<GranularityPlan>, f64)> = Vec::new();
    match &req.grid {
        SweepGrid::Block { granularities, .. } => {
            let grans: Vec<Option<usize>> = if has_gran {
                if granularities.is_empty() {
                    return Err(Error::invalid("sweep needs at least one granularity"));
                }
                granularities.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for g in grans {
                for &r in &req.rates {
                    points.push((g, None, r));
                }
            }
        }
        SweepGrid::Network { plans } => {
            let plans: Vec<Option<GranularityPlan>> = if has_gran {
                if plans.is_empty() {
                    return Err(Error::ParadigmFieldMissing {
                        paradigm: if req.paradigm == Paradigm::Spatial { "spatial" } else { "channel" },
                        field: "plan",
                    });
                }
                plans.iter().cloned().map(Some).collect()
            } else {
                vec![None]
            };
            for p in plans {
                for &r in &req.rates {
                    points.push((None, p.clone(), r));
                }
            }
        }
    }

    points
        .par_iter()
        .map(|(g, plan, r)| sweep_point(req, *g, plan.as_ref(), *r))
        .collect()
}

fn sweep_point(req: &SweepRequest<'_>, g: Option<usize>, plan: Option<&GranularityPlan>, r: f64) -> Result<SweepRow> {
    let base = |stage: String, block: String, gran: String, flops_ratio, r_ell, total_s: f64| {
        let (s, gcol) = split_granularity(req.paradigm, gran);
        SweepRow {
            net: req.net.name.clone(),
            device: req.hw.name.clone(),
            paradigm: req.paradigm,
            stage,
            block,
            s,
            g: gcol,
            r,
            batch: req.batch,
            flops_ratio,
            r_ell,
            total_us: total_s * 1e6,
        }
    };
    match &req.grid {
        SweepGrid::Block { stage, index, .. } => {
            let nb = req.net.block(*stage, *index)?;
            let cfg = match (req.paradigm, g) {
                (Paradigm::Spatial, Some(s)) => DynamicConfig::spatial(s),
                (Paradigm::Channel, Some(v)) => DynamicConfig::channel(v),
                (Paradigm::Layer, _) => DynamicConfig::layer(),
                _ => DynamicConfig::static_block(),
            };
            let prof = ActivationProfile::from_rate(&nb.spec, &cfg, r)?;
            let pred = predict_block(&nb.spec, &cfg, &prof, req.flags, req.hw, req.batch)?;
            let st = block_flops_static(&nb.spec)?;
            let dy = block_flops_dynamic(&nb.spec, &cfg, &prof)?;
            Ok(base(
                stage.to_string(),
                index.to_string(),
                g.map(|v| v.to_string()).unwrap_or_default(),
                dy.total / st.total,
                pred.r_ell,
                pred.breakdown.total_s,
            ))
        }
        SweepGrid::Network { .. } => {
            let rep = predict_network(req.net, plan, req.paradigm, &Rates::Scalar(r), req.flags, req.hw, req.batch)?;
            Ok(base(
                "all".into(),
                "all".into(),
                plan.map(|p| p.to_string()).unwrap_or_default(),
                rep.flops.ratio,
                rep.r_ell,
                rep.total.total_s,
            ))
        }
    }
}
