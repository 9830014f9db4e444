use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BlockSpec, ConvLayerSpec, TensorShape};

use super::conv::{conv2d_channel_subset, conv2d_direct, conv2d_valid, weight_len};
use super::mask::{BlockMasks, GatherPlan};
use super::tensor::Tensor;

/// Convolution weights of a bottleneck block (normalization folded in,
/// no nonlinearities).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub spec: BlockSpec,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
    pub downsample: Option<Vec<f64>>,
}

impl BlockWeights {
    /// Uniform weights scaled by `1 / sqrt(fan_in)` from a seeded generator.
    pub fn random(spec: &BlockSpec, seed: u64) -> Result<Self> {
        check_supported(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |layer: &ConvLayerSpec| {
            let fan_in = (layer.in_per_group() * layer.kernel * layer.kernel) as f64;
            let scale = 1.0 / fan_in.sqrt();
            (0..weight_len(layer))
                .map(|_| rng.gen_range(-scale..scale))
                .collect::<Vec<f64>>()
        };
        Ok(Self {
            spec: *spec,
            w1: gen(&spec.conv1),
            w2: gen(&spec.conv2),
            w3: gen(&spec.conv3),
            downsample: spec.downsample().map(|l| gen(&l)),
        })
    }
}

fn check_supported(spec: &BlockSpec) -> Result<()> {
    spec.validate()?;
    if spec.se_reduction.is_some() {
        // SE pools over the whole feature, so a patch-local pipeline is not
        // equivalent to the dense one
        return Err(Error::Unsupported("squeeze-excitation blocks in the reference executor".into()));
    }
    Ok(())
}

fn check_input(x: &Tensor, w: &BlockWeights) -> Result<()> {
    check_supported(&w.spec)?;
    if x.shape != w.spec.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "block expects {}, input is {}",
            w.spec.input_shape, x.shape
        )));
    }
    Ok(())
}

/// Identity or projected skip path.
pub fn shortcut(x: &Tensor, w: &BlockWeights) -> Result<Tensor> {
    match (w.spec.downsample(), &w.downsample) {
        (Some(layer), Some(dw)) => conv2d_direct(x, &layer, dw),
        (None, _) => Ok(x.clone()),
        (Some(_), None) => Err(Error::ShapeMismatch("missing downsample weights".into())),
    }
}

fn residual_branch(x: &Tensor, w: &BlockWeights) -> Result<Tensor> {
    let h1 = conv2d_direct(x, &w.spec.conv1, &w.w1)?;
    let h2 = conv2d_direct(&h1, &w.spec.conv2, &w.w2)?;
    conv2d_direct(&h2, &w.spec.conv3, &w.w3)
}

/// Plain dense block.
pub fn block_forward_dense(x: &Tensor, w: &BlockWeights) -> Result<Tensor> {
    check_input(x, w)?;
    let mut out = residual_branch(x, w)?;
    out.add_assign(&shortcut(x, w)?)?;
    Ok(out)
}

fn check_masks(x: &Tensor, w: &BlockWeights, masks: &BlockMasks) -> Result<()> {
    let out = w.spec.output_shape();
    let n = x.n;
    let count = |len: usize| {
        if len != n {
            Err(Error::MaskShapeMismatch(format!("{len} masks for a batch of {n}")))
        } else {
            Ok(())
        }
    };
    match masks {
        BlockMasks::Static => Ok(()),
        BlockMasks::Layer(v) => count(v.len()),
        BlockMasks::Spatial(v) => {
            count(v.len())?;
            for m in v {
                if m.height != out.height || m.width != out.width {
                    return Err(Error::MaskShapeMismatch(format!(
                        "mask covers {}x{}, block output is {}x{}",
                        m.height, m.width, out.height, out.width
                    )));
                }
            }
            Ok(())
        }
        BlockMasks::Channel(v) => {
            count(v.len())?;
            for m in v {
                if m.expanded.len() != w.spec.conv2.out_channels || w.spec.conv2.in_channels != w.spec.conv2.out_channels {
                    return Err(Error::MaskShapeMismatch(format!(
                        "channel mask of {} for width {}",
                        m.expanded.len(),
                        w.spec.conv2.out_channels
                    )));
                }
            }
            Ok(())
        }
    }
}

/// Training-time semantics: everything dense, masks multiplied in, skipped
/// outputs filled from the skip path.
pub fn block_forward_dense_masked(x: &Tensor, w: &BlockWeights, masks: &BlockMasks) -> Result<Tensor> {
    check_input(x, w)?;
    check_masks(x, w, masks)?;
    let sc = shortcut(x, w)?;
    let mut out = match masks {
        BlockMasks::Static => residual_branch(x, w)?,
        BlockMasks::Layer(bits) => {
            let mut f = residual_branch(x, w)?;
            let per = f.shape.numel();
            for (b, &keep) in bits.iter().enumerate() {
                if !keep {
                    f.data[b * per..(b + 1) * per].fill(0.0);
                }
            }
            f
        }
        BlockMasks::Spatial(ms) => {
            let mut f = residual_branch(x, w)?;
            for (b, m) in ms.iter().enumerate() {
                for c in 0..f.shape.channels {
                    for y in 0..f.shape.height {
                        for xx in 0..f.shape.width {
                            if !m.keeps(y, xx) {
                                f.set(b, c, y, xx, 0.0);
                            }
                        }
                    }
                }
            }
            f
        }
        BlockMasks::Channel(ms) => {
            let mut h1 = conv2d_direct(x, &w.spec.conv1, &w.w1)?;
            apply_channel_mask(&mut h1, ms);
            let mut h2 = conv2d_direct(&h1, &w.spec.conv2, &w.w2)?;
            apply_channel_mask(&mut h2, ms);
            conv2d_direct(&h2, &w.spec.conv3, &w.w3)?
        }
    };
    out.add_assign(&sc)?;
    Ok(out)
}

fn apply_channel_mask(t: &mut Tensor, ms: &[super::mask::ChannelMask]) {
    let area = t.shape.area();
    for (b, m) in ms.iter().enumerate() {
        for (c, &keep) in m.expanded.iter().enumerate() {
            if !keep {
                let start = t.index(b, c, 0, 0);
                t.data[start..start + area].fill(0.0);
            }
        }
    }
}

/// Test hook that corrupts the sparse pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SparseOptions {
    /// Scatter the i-th gathered patch one cell to the right (wrapping).
    pub misplace_patch: Option<usize>,
}

/// Inference-time semantics: only selected work is computed.
pub fn block_forward_sparse(x: &Tensor, w: &BlockWeights, masks: &BlockMasks) -> Result<Tensor> {
    block_forward_sparse_with(x, w, masks, SparseOptions::default())
}

pub fn block_forward_sparse_with(
    x: &Tensor,
    w: &BlockWeights,
    masks: &BlockMasks,
    opts: SparseOptions,
) -> Result<Tensor> {
    check_input(x, w)?;
    check_masks(x, w, masks)?;
    let mut out = shortcut(x, w)?;
    match masks {
        BlockMasks::Static => out.add_assign(&residual_branch(x, w)?)?,
        BlockMasks::Layer(bits) => {
            let per = out.shape.numel();
            for (b, &keep) in bits.iter().enumerate() {
                if keep {
                    let f = residual_branch(&x.item(b), w)?;
                    for (o, v) in out.data[b * per..(b + 1) * per].iter_mut().zip(&f.data) {
                        *o += v;
                    }
                }
            }
        }
        BlockMasks::Spatial(ms) => {
            let plan = GatherPlan::from_masks(ms)?;
            sparse_spatial(x, w, &plan, ms[0].grid_w, opts, &mut out)?;
        }
        BlockMasks::Channel(ms) => {
            let per = out.shape.numel();
            for (b, m) in ms.iter().enumerate() {
                let xb = x.item(b);
                let act = Some(m.expanded.as_slice());
                let h1 = conv2d_channel_subset(&xb, &w.spec.conv1, &w.w1, None, act)?;
                let h2 = conv2d_channel_subset(&h1, &w.spec.conv2, &w.w2, act, act)?;
                let f = conv2d_channel_subset(&h2, &w.spec.conv3, &w.w3, act, None)?;
                for (o, v) in out.data[b * per..(b + 1) * per].iter_mut().zip(&f.data) {
                    *o += v;
                }
            }
        }
    }
    Ok(out)
}

/// Masker-fused conv1 over the whole input, then per patch: gather the
/// conv1 window with its halo, 3x3 without padding, 1x1, and scatter-add
/// onto the skip path.
fn sparse_spatial(
    x: &Tensor,
    w: &BlockWeights,
    plan: &GatherPlan,
    grid_w: usize,
    opts: SparseOptions,
    out: &mut Tensor,
) -> Result<()> {
    if plan.is_empty() {
        return Ok(());
    }
    let spec = &w.spec;
    let s = plan.s;
    let stride = spec.conv2.stride;
    let pad = spec.conv2.padding() as isize;
    let extent = (s - 1) * stride + spec.conv2.kernel;
    let h1 = conv2d_direct(x, &spec.conv1, &w.w1)?;
    let c1 = h1.shape.channels;
    let patch_shape = TensorShape::new(c1, extent, extent)?;
    for (i, &(b, cy, cx)) in plan.patches.iter().enumerate() {
        let y0 = (cy * s * stride) as isize - pad;
        let x0 = (cx * s * stride) as isize - pad;
        let mut gathered = Tensor::zeros(1, patch_shape);
        for c in 0..c1 {
            for py in 0..extent {
                for px in 0..extent {
                    gathered.set(0, c, py, px, h1.at_padded(b, c, y0 + py as isize, x0 + px as isize));
                }
            }
        }
        let h2 = conv2d_valid(&gathered, &spec.conv2, &w.w2)?;
        let f = conv2d_valid(&h2, &spec.conv3, &w.w3)?;
        let tx = if opts.misplace_patch == Some(i) { (cx + 1) % grid_w } else { cx };
        for c in 0..f.shape.channels {
            for py in 0..s {
                for px in 0..s {
                    let (oy, ox) = (cy * s + py, tx * s + px);
                    let v = out.at(b, c, oy, ox) + f.at(0, c, py, px);
                    out.set(b, c, oy, ox, v);
                }
            }
        }
    }
    Ok(())
}
