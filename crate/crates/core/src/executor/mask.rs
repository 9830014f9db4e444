use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flops::channel_masker_hidden;

use super::gumbel::{decide, MaskMode};
use super::tensor::Tensor;

/// Patch mask of one image over an `height x width` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMask {
    pub s: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Row-major coarse cells.
    pub coarse: Vec<bool>,
    pub height: usize,
    pub width: usize,
    /// Nearest-neighbour `S x S` replication of `coarse`.
    pub upsampled: Vec<bool>,
    /// `upsampled` grown by the 3x3 receptive field.
    pub dilated: Vec<bool>,
}

impl SpatialMask {
    pub fn from_coarse(s: usize, grid_h: usize, grid_w: usize, coarse: Vec<bool>) -> Result<Self> {
        if s == 0 || coarse.len() != grid_h * grid_w {
            return Err(Error::MaskShapeMismatch(format!(
                "{} cells for a {grid_h}x{grid_w} grid",
                coarse.len()
            )));
        }
        let (height, width) = (grid_h * s, grid_w * s);
        let upsampled: Vec<bool> = (0..height * width)
            .map(|i| coarse[(i / width / s) * grid_w + (i % width) / s])
            .collect();
        let dilated = dilate(&upsampled, height, width, 1);
        Ok(Self {
            s,
            grid_h,
            grid_w,
            coarse,
            height,
            width,
            upsampled,
            dilated,
        })
    }

    /// Each cell active independently with probability `p`.
    pub fn random(s: usize, grid_h: usize, grid_w: usize, p: f64, rng: &mut impl Rng) -> Self {
        let coarse = (0..grid_h * grid_w).map(|_| rng.gen_bool(p.clamp(0.0, 1.0))).collect();
        Self::from_coarse(s, grid_h, grid_w, coarse).expect("consistent by construction")
    }

    pub fn active_cells(&self) -> usize {
        self.coarse.iter().filter(|b| **b).count()
    }

    #[inline]
    pub fn keeps(&self, y: usize, x: usize) -> bool {
        self.upsampled[y * self.width + x]
    }
}

/// Binary dilation with a square (Chebyshev) structuring element of the
/// given radius, clipped at the borders.
pub fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            for yy in y.saturating_sub(radius)..=(y + radius).min(height - 1) {
                for xx in x.saturating_sub(radius)..=(x + radius).min(width - 1) {
                    out[yy * width + xx] = true;
                }
            }
        }
    }
    out
}

/// Exact `(r_s, r_s_dil)` of a mask for a `k x k` convolution.
pub fn dilate_and_rates(mask: &SpatialMask, k: usize) -> Result<(f64, f64)> {
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel {k} must be odd")));
    }
    let total = (mask.height * mask.width) as f64;
    let ones = |m: &[bool]| m.iter().filter(|b| **b).count() as f64;
    let dil = dilate(&mask.upsampled, mask.height, mask.width, (k - 1) / 2);
    Ok((ones(&mask.upsampled) / total, ones(&dil) / total))
}

/// Channel-group mask of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMask {
    pub g: usize,
    pub coarse: Vec<bool>,
    /// `G`-fold replication of `coarse`.
    pub expanded: Vec<bool>,
}

impl ChannelMask {
    pub fn from_coarse(g: usize, coarse: Vec<bool>) -> Result<Self> {
        if g == 0 {
            return Err(Error::invalid("channel granularity must be positive"));
        }
        let expanded = coarse.iter().flat_map(|&b| std::iter::repeat_n(b, g)).collect();
        Ok(Self { g, coarse, expanded })
    }

    pub fn random(g: usize, groups: usize, p: f64, rng: &mut impl Rng) -> Self {
        let coarse = (0..groups).map(|_| rng.gen_bool(p.clamp(0.0, 1.0))).collect();
        Self::from_coarse(g, coarse).expect("positive granularity")
    }

    pub fn rate(&self) -> f64 {
        if self.coarse.is_empty() {
            return 0.0;
        }
        self.coarse.iter().filter(|b| **b).count() as f64 / self.coarse.len() as f64
    }
}

/// Masks for one block over a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMasks {
    Spatial(Vec<SpatialMask>),
    Channel(Vec<ChannelMask>),
    Layer(Vec<bool>),
    Static,
}

/// Active patches in batch, row, column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherPlan {
    pub s: usize,
    pub patches: Vec<(usize, usize, usize)>,
}

impl GatherPlan {
    pub fn from_masks(masks: &[SpatialMask]) -> Result<Self> {
        let s = masks.first().map(|m| m.s).unwrap_or(1);
        let mut patches = Vec::new();
        for (b, m) in masks.iter().enumerate() {
            if m.s != s {
                return Err(Error::MaskShapeMismatch("patch size differs across the batch".into()));
            }
            for cy in 0..m.grid_h {
                for cx in 0..m.grid_w {
                    if m.coarse[cy * m.grid_w + cx] {
                        patches.push((b, cy, cx));
                    }
                }
            }
        }
        Ok(Self { s, patches })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Average pool to `oh x ow` with adaptive bins `[floor(i H / oh), ceil((i + 1) H / oh))`.
pub fn adaptive_avg_pool(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (h, w) = (x.shape.height, x.shape.width);
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return Err(Error::ShapeMismatch(format!("cannot pool {h}x{w} to {oh}x{ow}")));
    }
    let shape = crate::model::TensorShape {
        channels: x.shape.channels,
        height: oh,
        width: ow,
    };
    let mut out = Tensor::zeros(x.n, shape);
    for b in 0..x.n {
        for c in 0..x.shape.channels {
            for i in 0..oh {
                let (y0, y1) = (i * h / oh, ((i + 1) * h).div_ceil(oh));
                for j in 0..ow {
                    let (x0, x1) = (j * w / ow, ((j + 1) * w).div_ceil(ow));
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            acc += x.at(b, c, y, xx);
                        }
                    }
                    out.set(b, c, i, j, acc / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
    }
    Ok(out)
}

/// 1x1 conv from `C` channels to the two logits (keep, skip).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMaskerWeights {
    pub keep: Vec<f64>,
    pub skip: Vec<f64>,
}

impl SpatialMaskerWeights {
    pub fn random(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..channels).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        Self { keep: v(), skip: v() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMaskerOutput {
    pub masks: Vec<SpatialMask>,
    /// Relaxed keep values per cell (one-hot in inference mode).
    pub soft: Vec<Vec<f64>>,
}

/// Spatial masker over a mask grid that covers `x` with patches of `s`.
pub fn spatial_masker_forward(
    x: &Tensor,
    weights: &SpatialMaskerWeights,
    s: usize,
    mode: MaskMode,
) -> Result<SpatialMaskerOutput> {
    let (h, w) = (x.shape.height, x.shape.width);
    for (dim, what) in [(h, "feature height"), (w, "feature width")] {
        if s == 0 || dim % s != 0 {
            return Err(Error::GranularityMismatch { value: s, dim, what });
        }
    }
    spatial_masker_on_grid(x, weights, s, h / s, w / s, mode)
}

/// Spatial masker producing a `grid_h x grid_w` mask of `s`-patches; `x`
/// is pooled adaptively (the block input may be larger than the output
/// feature for strided blocks).
pub fn spatial_masker_on_grid(
    x: &Tensor,
    weights: &SpatialMaskerWeights,
    s: usize,
    grid_h: usize,
    grid_w: usize,
    mode: MaskMode,
) -> Result<SpatialMaskerOutput> {
    let c = x.shape.channels;
    if weights.keep.len() != c || weights.skip.len() != c {
        return Err(Error::ShapeMismatch("masker weights do not match input channels".into()));
    }
    let pooled = adaptive_avg_pool(x, grid_h, grid_w)?;
    let mut masks = Vec::with_capacity(x.n);
    let mut soft_all = Vec::with_capacity(x.n);
    for b in 0..x.n {
        let pairs: Vec<(f64, f64)> = (0..grid_h * grid_w)
            .map(|cell| {
                let (i, j) = (cell / grid_w, cell % grid_w);
                let mut l0 = 0.0;
                let mut l1 = 0.0;
                for ch in 0..c {
                    let v = pooled.at(b, ch, i, j);
                    l0 += weights.keep[ch] * v;
                    l1 += weights.skip[ch] * v;
                }
                (l0, l1)
            })
            .collect();
        let mode = match mode {
            MaskMode::Train { tau, seed } => MaskMode::Train {
                tau,
                seed: seed.wrapping_add(b as u64),
            },
            m => m,
        };
        let (soft, hard) = decide(&pairs, mode);
        masks.push(SpatialMask::from_coarse(s, grid_h, grid_w, hard)?);
        soft_all.push(soft);
    }
    Ok(SpatialMaskerOutput { masks, soft: soft_all })
}

/// Two-layer MLP `C -> hidden -> 2D` (ReLU between). The output holds the
/// keep logit of group `d` at `2d` and the skip logit at `2d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMaskerWeights {
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl ChannelMaskerWeights {
    pub fn random(channels: usize, groups: usize, seed: u64) -> Self {
        let hidden = channel_masker_hidden(groups);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            hidden,
            w1: (0..hidden * channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            w2: (0..2 * groups * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMaskerOutput {
    pub masks: Vec<ChannelMask>,
    pub soft: Vec<Vec<f64>>,
}

/// Channel masker deciding groups of `g` over `width` channels.
pub fn channel_masker_forward(
    x: &Tensor,
    weights: &ChannelMaskerWeights,
    width: usize,
    g: usize,
    mode: MaskMode,
) -> Result<ChannelMaskerOutput> {
    if g == 0 || width % g != 0 {
        return Err(Error::GranularityMismatch {
            value: g,
            dim: width,
            what: "channel width",
        });
    }
    let d = width / g;
    let c = x.shape.channels;
    let hdim = weights.hidden;
    if weights.w1.len() != hdim * c || weights.w2.len() != 2 * d * hdim {
        return Err(Error::ShapeMismatch("channel masker weights do not match".into()));
    }
    let pooled = adaptive_avg_pool(x, 1, 1)?;
    let mut masks = Vec::with_capacity(x.n);
    let mut soft_all = Vec::with_capacity(x.n);
    for b in 0..x.n {
        let hidden: Vec<f64> = (0..hdim)
            .map(|j| {
                let z: f64 = (0..c).map(|ch| weights.w1[j * c + ch] * pooled.at(b, ch, 0, 0)).sum();
                z.max(0.0)
            })
            .collect();
        let logit = |row: usize| -> f64 { (0..hdim).map(|j| weights.w2[row * hdim + j] * hidden[j]).sum() };
        let pairs: Vec<(f64, f64)> = (0..d).map(|k| (logit(2 * k), logit(2 * k + 1))).collect();
        let mode = match mode {
            MaskMode::Train { tau, seed } => MaskMode::Train {
                tau,
                seed: seed.wrapping_add(b as u64),
            },
            m => m,
        };
        let (soft, hard) = decide(&pairs, mode);
        masks.push(ChannelMask::from_coarse(g, hard)?);
        soft_all.push(soft);
    }
    Ok(ChannelMaskerOutput { masks, soft: soft_all })
}

/// Collapses the two-logit masker into one filter: keep iff
/// `x . (W0 - W1) >= 0`, which is the argmax decision with ties to keep.
pub fn fused_masker_weight_identity(weights: &SpatialMaskerWeights) -> Vec<f64> {
    weights.keep.iter().zip(&weights.skip).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TensorShape;

    #[test]
    fn upsample_and_dilate() {
        let m = SpatialMask::from_coarse(4, 2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(m.upsampled.iter().filter(|b| **b).count(), 16);
        let (r, rd) = dilate_and_rates(&m, 3).unwrap();
        assert_eq!(r, 0.25);
        assert_eq!(rd, 25.0 / 64.0);
        let all = SpatialMask::from_coarse(2, 2, 2, vec![true; 4]).unwrap();
        assert_eq!(dilate_and_rates(&all, 3).unwrap(), (1.0, 1.0));
        let none = SpatialMask::from_coarse(2, 2, 2, vec![false; 4]).unwrap();
        assert_eq!(dilate_and_rates(&none, 3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn channel_replication() {
        let m = ChannelMask::from_coarse(2, (0..8).map(|i| i % 2 == 0).collect()).unwrap();
        assert_eq!(m.expanded.len(), 16);
        assert_eq!(&m.expanded[..4], &[true, true, false, false]);
        assert_eq!(m.rate(), 0.5);
    }

    #[test]
    fn dominant_logit_keeps_everything() {
        // constant positive input; keep weights dominate
        let x = Tensor::from_vec(1, TensorShape::new(1, 8, 8).unwrap(), vec![1.0; 64]).unwrap();
        let w = SpatialMaskerWeights {
            keep: vec![5.0],
            skip: vec![0.0],
        };
        let out = spatial_masker_forward(&x, &w, 4, MaskMode::Inference).unwrap();
        assert!(out.masks[0].coarse.iter().all(|b| *b));
        assert!(matches!(
            spatial_masker_forward(&x, &w, 3, MaskMode::Inference),
            Err(Error::GranularityMismatch { value: 3, dim: 8, .. })
        ));
    }

    #[test]
    fn channel_masker_all_keep() {
        let x = Tensor::from_vec(1, TensorShape::new(2, 2, 2).unwrap(), vec![1.0; 8]).unwrap();
        let hidden = channel_masker_hidden(8);
        let w = ChannelMaskerWeights {
            hidden,
            w1: vec![1.0; hidden * 2],
            w2: (0..16 * hidden).map(|i| if (i / hidden) % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        };
        let out = channel_masker_forward(&x, &w, 8, 1, MaskMode::Inference).unwrap();
        assert_eq!(out.masks[0].rate(), 1.0);
        assert_eq!(channel_masker_hidden(512), 32);
        assert!(channel_masker_forward(&x, &w, 8, 3, MaskMode::Inference).is_err());
    }

    #[test]
    fn gather_plan_counts_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let masks: Vec<SpatialMask> = (0..3).map(|_| SpatialMask::random(2, 4, 4, 0.5, &mut rng)).collect();
        let plan = GatherPlan::from_masks(&masks).unwrap();
        assert_eq!(plan.len(), masks.iter().map(|m| m.active_cells()).sum::<usize>());
        let mut uniq = plan.patches.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), plan.len());
    }

    #[test]
    fn adaptive_pool_bins() {
        let x = Tensor::from_vec(1, TensorShape::new(1, 1, 5).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let p = adaptive_avg_pool(&x, 1, 2).unwrap();
        // bins [0, 3) and [2, 5)
        assert_eq!(p.data, vec![2.0, 4.0]);
    }
}
