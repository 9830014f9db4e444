//! Multiply-accumulate accounting for static and dynamic blocks.
//!
//! One MAC counts as one FLOP. Bias, normalization and activations are not
//! counted. Dynamic counts are expectations under an [`ActivationProfile`]
//! and therefore real-valued; static counts are exact integers carried in
//! `f64` (every network here is far below 2^53 MACs).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    validate_config, ActivationProfile, BlockSpec, ConvLayerSpec, DynamicConfig, Paradigm,
    TensorShape,
};
use crate::zoo::NetworkSpec;

/// MAC-to-FLOP convention for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacConvention {
    /// 1 MAC = 1 FLOP.
    #[default]
    Single,
    /// 1 MAC = 2 FLOPs (multiply and add counted separately).
    Double,
}

impl MacConvention {
    pub fn factor(self) -> f64 {
        match self {
            MacConvention::Single => 1.0,
            MacConvention::Double => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FlopsBreakdown {
    pub conv1: f64,
    pub conv2: f64,
    pub conv3: f64,
    pub masker: f64,
    pub se: f64,
    pub downsample: f64,
    pub total: f64,
}

impl FlopsBreakdown {
    pub fn from_parts(conv1: f64, conv2: f64, conv3: f64, masker: f64, se: f64, downsample: f64) -> Self {
        Self {
            conv1,
            conv2,
            conv3,
            masker,
            se,
            downsample,
            total: conv1 + conv2 + conv3 + masker + se + downsample,
        }
    }

    /// The three bottleneck convolutions only.
    pub fn conv_total(&self) -> f64 {
        self.conv1 + self.conv2 + self.conv3
    }

    pub fn in_convention(&self, convention: MacConvention) -> Self {
        let k = convention.factor();
        Self::from_parts(
            self.conv1 * k,
            self.conv2 * k,
            self.conv3 * k,
            self.masker * k,
            self.se * k,
            self.downsample * k,
        )
    }
}

/// `H_out * W_out * C_out * (C_in / groups) * k^2`.
pub fn conv_macs(layer: &ConvLayerSpec, out_shape: TensorShape) -> Result<u64> {
    layer.validate()?;
    if out_shape.channels != layer.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "output has {} channels, layer produces {}",
            out_shape.channels, layer.out_channels
        )));
    }
    let k2 = (layer.kernel * layer.kernel) as u64;
    Ok(out_shape.height as u64
        * out_shape.width as u64
        * layer.out_channels as u64
        * layer.in_per_group() as u64
        * k2)
}

/// Squeeze-excitation MACs: the two fully connected layers.
pub fn se_macs(block: &BlockSpec) -> u64 {
    block
        .se_hidden()
        .map(|h| 2 * (block.conv2.out_channels * h) as u64)
        .unwrap_or(0)
}

pub fn block_flops_static(block: &BlockSpec) -> Result<FlopsBreakdown> {
    block.validate()?;
    let mid = block.mid_shape();
    let inner = block.inner_output_shape();
    let out = block.output_shape();
    let f1 = conv_macs(&block.conv1, mid)?;
    let f2 = conv_macs(&block.conv2, inner)?;
    let f3 = conv_macs(&block.conv3, out)?;
    let ds = match block.downsample() {
        Some(layer) => conv_macs(&layer, out)?,
        None => 0,
    };
    Ok(FlopsBreakdown::from_parts(
        f1 as f64,
        f2 as f64,
        f3 as f64,
        0.0,
        se_macs(block) as f64,
        ds as f64,
    ))
}

/// Hidden width of the channel masker MLP for a mask of `d` groups.
pub fn channel_masker_hidden(d: usize) -> usize {
    (d / 16).max(16)
}

/// MACs of the masker that decides for `block` under `cfg`.
///
/// Spatial and layer maskers average-pool the block input onto the coarse
/// grid (one accumulate per input element) and apply a 1x1 conv to two
/// logits per cell. The channel masker is a two-layer MLP `C -> h -> 2D`.
pub fn masker_macs(block: &BlockSpec, cfg: &DynamicConfig) -> u64 {
    let input = block.input_shape;
    match cfg.paradigm {
        Paradigm::Static => 0,
        Paradigm::Spatial | Paradigm::Layer => {
            let out = block.output_shape();
            let s = cfg.patch_size(block).unwrap_or(1).max(1);
            let cells = (out.height.div_ceil(s) * out.width.div_ceil(s)) as u64;
            input.numel() as u64 + cells * 2 * input.channels as u64
        }
        Paradigm::Channel => {
            let g = cfg.channel_granularity.unwrap_or(1).max(1);
            let d = block.conv2.out_channels / g;
            let h = channel_masker_hidden(d);
            (input.channels * h + h * 2 * d) as u64
        }
    }
}

/// Expected MACs of a dynamic block.
///
/// Spatial: conv1 at the dilated rate, conv2/conv3/SE at the spatial rate.
/// Channel: conv1 and conv3 linear in the channel rate, conv2 quadratic;
/// SE and the projection shortcut untouched. Layer: everything at the layer
/// rate. The masker is always added in full.
pub fn block_flops_dynamic(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
) -> Result<FlopsBreakdown> {
    validate_config(block, cfg)?;
    prof.validate()?;
    let st = block_flops_static(block)?;
    Ok(scale_breakdown(&st, cfg.paradigm, prof, masker_macs(block, cfg) as f64))
}

/// Applies a paradigm's rate scaling to a static breakdown and adds the
/// masker cost. Static returns `stat` unchanged.
pub fn scale_breakdown(
    stat: &FlopsBreakdown,
    paradigm: Paradigm,
    prof: &ActivationProfile,
    masker: f64,
) -> FlopsBreakdown {
    let st = stat;
    let parts = match paradigm {
        Paradigm::Static => return *st,
        Paradigm::Spatial => {
            let (r, rd) = (prof.r_spatial, prof.r_spatial_dilated);
            (rd * st.conv1, r * st.conv2, r * st.conv3, r * st.se, r * st.downsample)
        }
        Paradigm::Channel => {
            let r = prof.r_channel;
            (r * st.conv1, r * r * st.conv2, r * st.conv3, st.se, st.downsample)
        }
        Paradigm::Layer => {
            let r = prof.r_layer;
            (r * st.conv1, r * st.conv2, r * st.conv3, r * st.se, r * st.downsample)
        }
    };
    FlopsBreakdown::from_parts(parts.0, parts.1, parts.2, masker, parts.3, parts.4)
}

/// Ratio of dynamic to static convolution MACs (masker, SE and shortcut
/// excluded).
pub fn theoretical_speedup(stat: &FlopsBreakdown, dynamic: &FlopsBreakdown) -> Result<f64> {
    let denom = stat.conv_total();
    if denom == 0.0 {
        return Err(Error::DivisionByZero("static convolution MACs are zero"));
    }
    Ok(dynamic.conv_total() / denom)
}

/// Expected dilated activation rate when each coarse cell of an `S`-patch
/// grid is active independently with probability `r`.
///
/// An output pixel is covered by the dilated mask when any coarse cell
/// within the 3x3 receptive field around it is active, so its coverage
/// probability is `1 - (1 - r)^n` with `n` the number of distinct cells that
/// window touches (clipped at the borders). For sparse masks this reduces to
/// the one-ring estimate `r * ((S + 2) / S)^2`.
pub fn default_dilated_rate(block: &BlockSpec, s: usize, r: f64) -> f64 {
    let out = block.output_shape();
    expected_dilated_rate(out.height, out.width, s, block.conv2.kernel, r)
}

pub fn expected_dilated_rate(height: usize, width: usize, s: usize, kernel: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    let s = s.max(1);
    let radius = kernel / 2;
    let cells_touched = |n: usize, i: usize| {
        let lo = i.saturating_sub(radius) / s;
        let hi = (i + radius).min(n - 1) / s;
        hi - lo + 1
    };
    let rows: Vec<usize> = (0..height).map(|y| cells_touched(height, y)).collect();
    let cols: Vec<usize> = (0..width).map(|x| cells_touched(width, x)).collect();
    let miss = 1.0 - r;
    let mut covered = 0.0;
    for &cy in &rows {
        for &cx in &cols {
            covered += 1.0 - miss.powi((cy * cx) as i32);
        }
    }
    (covered / (height * width) as f64).clamp(r, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkFlopsReport {
    pub f_dyn: f64,
    pub f_stat: u64,
    pub ratio: f64,
    /// Stem plus classifier MACs; always static.
    pub fixed: u64,
    pub blocks_static: Vec<FlopsBreakdown>,
    pub blocks_dynamic: Vec<FlopsBreakdown>,
}

/// Whole-network expected and static MACs.
pub fn network_flops(
    net: &NetworkSpec,
    configs: &[DynamicConfig],
    profiles: &[ActivationProfile],
) -> Result<NetworkFlopsReport> {
    let blocks = net.blocks()?;
    if profiles.len() != blocks.len() {
        return Err(Error::ProfileCountMismatch {
            expected: blocks.len(),
            got: profiles.len(),
        });
    }
    if configs.len() != blocks.len() {
        return Err(Error::ProfileCountMismatch {
            expected: blocks.len(),
            got: configs.len(),
        });
    }
    let fixed = net.stem_macs() + net.classifier_macs();
    let mut f_stat = fixed;
    let mut f_dyn = fixed as f64;
    let mut blocks_static = Vec::with_capacity(blocks.len());
    let mut blocks_dynamic = Vec::with_capacity(blocks.len());
    for ((b, cfg), prof) in blocks.iter().zip(configs).zip(profiles) {
        let st = block_flops_static(&b.spec)?;
        let dy = block_flops_dynamic(&b.spec, cfg, prof)?;
        f_stat += st.total as u64;
        f_dyn += dy.total;
        blocks_static.push(st);
        blocks_dynamic.push(dy);
    }
    if f_stat == 0 {
        return Err(Error::DivisionByZero("network has no static MACs"));
    }
    Ok(NetworkFlopsReport {
        f_dyn,
        f_stat,
        ratio: f_dyn / f_stat as f64,
        fixed,
        blocks_static,
        blocks_dynamic,
    })
}

/// One CSV row: static and dynamic MACs of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopsRow {
    pub block_id: String,
    pub stat: FlopsBreakdown,
    pub dynamic: FlopsBreakdown,
}

impl FlopsRow {
    pub const HEADER: [&'static str; 9] = [
        "block_id",
        "f1",
        "f2",
        "f3",
        "masker",
        "se",
        "total_static",
        "total_dynamic",
        "ratio",
    ];

    pub fn ratio(&self) -> f64 {
        if self.stat.total == 0.0 {
            0.0
        } else {
            self.dynamic.total / self.stat.total
        }
    }

    /// Dynamic F1..F3, masker and SE, then totals and ratio.
    pub fn record(&self) -> Vec<String> {
        vec![
            self.block_id.clone(),
            fmt_macs(self.dynamic.conv1),
            fmt_macs(self.dynamic.conv2),
            fmt_macs(self.dynamic.conv3),
            fmt_macs(self.dynamic.masker),
            fmt_macs(self.dynamic.se),
            fmt_macs(self.stat.total),
            fmt_macs(self.dynamic.total),
            format!("{:.6}", self.ratio()),
        ]
    }
}

fn fmt_macs(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as u64)
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(c: usize, hw: usize, w: usize, out: usize, stride: usize) -> BlockSpec {
        BlockSpec::bottleneck(TensorShape::new(c, hw, hw).unwrap(), w, out, stride, 1, None).unwrap()
    }

    #[test]
    fn conv_mac_examples() {
        let l = ConvLayerSpec::new(64, 64, 3, 1, 1).unwrap();
        assert_eq!(conv_macs(&l, TensorShape::new(64, 56, 56).unwrap()).unwrap(), 56 * 56 * 64 * 64 * 9);
        assert_eq!(conv_macs(&l, TensorShape::new(64, 56, 56).unwrap()).unwrap(), 115_605_504);
        let l = ConvLayerSpec::pointwise(64, 256, 1).unwrap();
        assert_eq!(conv_macs(&l, TensorShape::new(256, 56, 56).unwrap()).unwrap(), 51_380_224);
        let empty = TensorShape { channels: 256, height: 0, width: 56 };
        assert_eq!(conv_macs(&l, empty).unwrap(), 0);
        assert!(matches!(
            conv_macs(&l, TensorShape::new(128, 56, 56).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn grouped_conv_macs() {
        let l = ConvLayerSpec::new(64, 64, 3, 1, 4).unwrap();
        assert_eq!(conv_macs(&l, TensorShape::new(64, 8, 8).unwrap()).unwrap(), 8 * 8 * 64 * 16 * 9);
    }

    #[test]
    fn channel_masker_hidden_units() {
        assert_eq!(channel_masker_hidden(512), 32);
        assert_eq!(channel_masker_hidden(64), 16);
        assert_eq!(channel_masker_hidden(8), 16);
        let b = block(256, 14, 512, 1024, 1);
        // C = 256 block input, D = 512 -> h = 32
        assert_eq!(masker_macs(&b, &DynamicConfig::channel(1)), (256 * 32 + 32 * 2 * 512) as u64);
    }

    #[test]
    fn spatial_masker_conv_part() {
        let b = block(64, 56, 64, 64, 1);
        let total = masker_macs(&b, &DynamicConfig::spatial(4));
        let pool = 64 * 56 * 56;
        assert_eq!(total - pool, 25_088);
        assert_eq!(25_088, 14 * 14 * 2 * 64);
    }

    #[test]
    fn static_and_full_spatial() {
        let b = block(256, 56, 64, 256, 1);
        let st = block_flops_static(&b).unwrap();
        assert_eq!(st.conv1 as u64, 56 * 56 * 64 * 256);
        let full = ActivationProfile::full();
        let dy = block_flops_dynamic(&b, &DynamicConfig::spatial(4), &full).unwrap();
        let masker = masker_macs(&b, &DynamicConfig::spatial(4)) as f64;
        assert_eq!(dy.total, st.total + masker);
        assert_eq!(dy.conv_total(), st.conv_total());
    }

    #[test]
    fn layer_rate_zero_keeps_masker() {
        let b = block(256, 56, 64, 256, 1);
        let p = ActivationProfile::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let dy = block_flops_dynamic(&b, &DynamicConfig::layer(), &p).unwrap();
        assert_eq!(dy.conv_total(), 0.0);
        assert!(dy.masker > 0.0);
    }

    #[test]
    fn static_paradigm_is_exact_integer_sum() {
        let b = block(256, 56, 128, 512, 2);
        let st = block_flops_dynamic(&b, &DynamicConfig::static_block(), &ActivationProfile::full()).unwrap();
        let expect = conv_macs(&b.conv1, b.mid_shape()).unwrap()
            + conv_macs(&b.conv2, b.inner_output_shape()).unwrap()
            + conv_macs(&b.conv3, b.output_shape()).unwrap()
            + conv_macs(&b.downsample().unwrap(), b.output_shape()).unwrap();
        assert_eq!(st.total as u64, expect);
        assert_eq!(st.masker, 0.0);
    }

    #[test]
    fn speedup_examples() {
        let unit = FlopsBreakdown::from_parts(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
        let r: f64 = 0.5;
        let ch = FlopsBreakdown::from_parts(r, r * r, r, 0.0, 0.0, 0.0);
        // 3 units static; 1.25 units dynamic
        assert!((theoretical_speedup(&unit, &ch).unwrap() - 5.0 / 12.0).abs() < 1e-15);

        let st = FlopsBreakdown::from_parts(1.0, 2.0, 2.0, 0.0, 0.0, 0.0);
        let sp = FlopsBreakdown::from_parts(0.6, 1.0, 1.0, 0.0, 0.0, 0.0);
        assert!((theoretical_speedup(&st, &sp).unwrap() - 0.52).abs() < 1e-15);

        let zero = FlopsBreakdown::default();
        assert!(matches!(theoretical_speedup(&zero, &unit), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn dilated_estimate_limits() {
        // sparse limit follows the one-ring growth factor ((S+2)/S)^2
        let r = 1e-4;
        let est = expected_dilated_rate(4000, 4000, 4, 3, r);
        assert!((est / r - 2.25).abs() < 1e-2, "{}", est / r);
        assert_eq!(expected_dilated_rate(56, 56, 4, 3, 0.0), 0.0);
        assert_eq!(expected_dilated_rate(56, 56, 4, 3, 1.0), 1.0);
        // whole-feature patch cannot grow
        assert!((expected_dilated_rate(7, 7, 7, 3, 0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn csv_row_layout() {
        let b = block(256, 56, 64, 256, 1);
        let st = block_flops_static(&b).unwrap();
        let row = FlopsRow { block_id: "s1b1".into(), stat: st, dynamic: st };
        let rec = row.record();
        assert_eq!(rec.len(), FlopsRow::HEADER.len());
        assert_eq!(rec[8], "1.000000");
    }
}
