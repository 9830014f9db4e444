//! Lowering of a block into the operator workloads the predictor schedules.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flops::channel_masker_hidden;
use crate::model::{validate_config, ActivationProfile, BlockSpec, DynamicConfig, Paradigm, ELEMENT_BYTES};

use super::tile::Dims;

const B: u64 = ELEMENT_BYTES as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    /// Spatial masker computed as an extra output channel of conv1.
    MaskerConvFused,
    /// Stand-alone spatial or layer masker: pool to the coarse grid, 1x1 conv.
    Masker,
    ChannelMaskerMlp,
    PointwiseConv,
    Conv,
    Gather,
    GatherConv,
    SeReduce,
    SeScale,
    Scatter,
    ScatterAdd,
    Add,
}

/// How a tile's input footprint follows from its output footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InputAccess {
    /// Convolution window: each output pixel reads a `kernel` window at
    /// `stride`; neighbouring tiles re-read the overlapping halo.
    Window {
        channels_per_group: usize,
        groups: usize,
        out_per_group: usize,
        kernel: usize,
        stride: usize,
    },
    /// Each output element reduces `elements_per_item` inputs. With
    /// `shared_across_c` all output channels of an item read the same input.
    Reduce { elements_per_item: f64, shared_across_c: bool },
    /// `operands` inputs of the output's shape.
    Elementwise { operands: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Workload {
    pub kind: OpKind,
    pub label: &'static str,
    pub dims: Dims,
    pub access: InputAccess,
    /// Extra same-shape reads fused into the output path (residual add).
    pub epilogue_operands: u32,
    /// Unique bytes read from off-chip memory, including epilogue operands.
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    /// Weight elements every tile loads regardless of its channels.
    pub weight_fixed: u64,
    /// Weight elements per output channel a tile covers.
    pub weight_per_out_channel: u64,
    pub macs: u64,
    /// Probability the workload runs; latency is scaled by it.
    pub expectation: f64,
}

impl Workload {
    fn new(kind: OpKind, label: &'static str, dims: Dims, access: InputAccess) -> Self {
        Self {
            kind,
            label,
            dims,
            access,
            epilogue_operands: 0,
            input_bytes: 0,
            weight_bytes: 0,
            output_bytes: dims.numel() * B,
            weight_fixed: 0,
            weight_per_out_channel: 0,
            macs: 0,
            expectation: 1.0,
        }
    }

    /// Input elements read by one tile `(t_p, channels, extent1, extent2)`
    /// for window accesses; `None` for other accesses.
    pub fn window_geometry(&self, t_p: usize, t_c: usize, t_s1: usize, t_s2: usize) -> Option<[usize; 4]> {
        match self.access {
            InputAccess::Window {
                channels_per_group,
                groups,
                out_per_group,
                kernel,
                stride,
            } => {
                let spanned = t_c.div_ceil(out_per_group.max(1)).clamp(1, groups.max(1));
                let ext = |t: usize| (t - 1) * stride + kernel;
                Some([t_p, spanned * channels_per_group, ext(t_s1), ext(t_s2)])
            }
            _ => None,
        }
    }
}

/// Operator fusion switches for the spatial pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct FusionFlags {
    pub fuse_masker_conv1: bool,
    pub fuse_gather_conv: bool,
    pub fuse_scatter_add: bool,
}

impl FusionFlags {
    pub const NONE: Self = Self {
        fuse_masker_conv1: false,
        fuse_gather_conv: false,
        fuse_scatter_add: false,
    };
    pub const ALL: Self = Self {
        fuse_masker_conv1: true,
        fuse_gather_conv: true,
        fuse_scatter_add: true,
    };

    /// All eight combinations; bit 0 masker, bit 1 gather, bit 2 scatter.
    pub fn all_combinations() -> [Self; 8] {
        std::array::from_fn(|i| Self {
            fuse_masker_conv1: i & 1 != 0,
            fuse_gather_conv: i & 2 != 0,
            fuse_scatter_add: i & 4 != 0,
        })
    }

    /// Parses `all`, `none`, or a comma list of `masker`, `gather`, `scatter`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim().to_ascii_lowercase();
        match text.as_str() {
            "all" => return Ok(Self::ALL),
            "none" | "" => return Ok(Self::NONE),
            _ => {}
        }
        let mut f = Self::NONE;
        for part in text.split(',') {
            match part.trim() {
                "masker" => f.fuse_masker_conv1 = true,
                "gather" => f.fuse_gather_conv = true,
                "scatter" => f.fuse_scatter_add = true,
                other => return Err(Error::invalid(format!("unknown fusion `{other}`"))),
            }
        }
        Ok(f)
    }

    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.fuse_masker_conv1, "masker"),
            (self.fuse_gather_conv, "gather"),
            (self.fuse_scatter_add, "scatter"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(",")
        }
    }
}

/// Shape of the channel masker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ChannelMaskerKind {
    /// Pooled features straight to `2D` logits.
    OneLayer,
    /// `C -> hidden -> 2D` with the hidden width of [`channel_masker_hidden`].
    #[default]
    TwoLayer,
}

/// Knobs beyond the rate-level description of a block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkloadOptions {
    /// Exact active patch count over the batch, e.g. from a concrete mask.
    pub active_patches: Option<usize>,
    pub channel_masker: ChannelMaskerKind,
}

/// Workloads of `block` at batch `batch` under `cfg` and `prof`.
pub fn block_workloads(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
    flags: FusionFlags,
    batch: usize,
) -> Result<Vec<Workload>> {
    block_workloads_with(block, cfg, prof, flags, batch, &WorkloadOptions::default())
}

pub fn block_workloads_with(
    block: &BlockSpec,
    cfg: &DynamicConfig,
    prof: &ActivationProfile,
    flags: FusionFlags,
    batch: usize,
    opts: &WorkloadOptions,
) -> Result<Vec<Workload>> {
    let cfg = validate_config(block, cfg)?;
    prof.validate()?;
    if batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    let g = Geometry::new(block, batch);
    Ok(match cfg.paradigm {
        Paradigm::Static => static_workloads(&g),
        Paradigm::Layer => layer_workloads(&g, prof.r_layer),
        Paradigm::Spatial => {
            let s = cfg.spatial_granularity.expect("validated");
            spatial_workloads(&g, s, prof, flags, opts.active_patches)?
        }
        Paradigm::Channel => {
            let gran = cfg.channel_granularity.expect("validated");
            channel_workloads(&g, gran, prof.r_channel, opts.channel_masker)
        }
    })
}

/// Block dimensions shared by every lowering.
struct Geometry {
    n: usize,
    c0: usize,
    c1: usize,
    c2: usize,
    c3: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    groups: usize,
    se_hidden: Option<usize>,
    downsample: bool,
}

impl Geometry {
    fn new(b: &BlockSpec, n: usize) -> Self {
        let out = b.output_shape();
        Self {
            n,
            c0: b.input_shape.channels,
            c1: b.conv1.out_channels,
            c2: b.conv2.out_channels,
            c3: b.conv3.out_channels,
            h: b.input_shape.height,
            w: b.input_shape.width,
            ho: out.height,
            wo: out.width,
            stride: b.conv2.stride,
            groups: b.conv2.groups,
            se_hidden: b.se_hidden(),
            downsample: b.has_downsample,
        }
    }

    fn input_elems(&self) -> u64 {
        (self.n * self.c0 * self.h * self.w) as u64
    }

    fn conv1_out_elems(&self) -> u64 {
        (self.n * self.c1 * self.h * self.w) as u64
    }

    fn out_elems(&self) -> u64 {
        (self.n * self.c3 * self.ho * self.wo) as u64
    }
}

fn window(cpg: usize, groups: usize, opg: usize, kernel: usize, stride: usize) -> InputAccess {
    InputAccess::Window {
        channels_per_group: cpg,
        groups,
        out_per_group: opg,
        kernel,
        stride,
    }
}

/// Dense convolution producing `dims`, reading `in_elems` unique inputs.
#[allow(clippy::too_many_arguments)]
fn conv(
    kind: OpKind,
    label: &'static str,
    dims: Dims,
    in_per_group: usize,
    groups: usize,
    kernel: usize,
    stride: usize,
    in_elems: u64,
) -> Workload {
    let opg = (dims.c / groups).max(1);
    let per_out = (in_per_group * kernel * kernel) as u64;
    let mut wl = Workload::new(kind, label, dims, window(in_per_group, groups, opg, kernel, stride));
    wl.input_bytes = in_elems * B;
    wl.weight_per_out_channel = per_out;
    wl.weight_bytes = dims.c as u64 * per_out * B;
    wl.macs = dims.numel() * per_out;
    wl
}

fn with_residual(mut wl: Workload) -> Workload {
    wl.epilogue_operands = 1;
    wl.input_bytes += wl.dims.numel() * B;
    wl
}

fn se_workloads(g: &Geometry, items: usize, spatial: (usize, usize), pooled: f64, out: &mut Vec<Workload>) {
    let Some(h) = g.se_hidden else { return };
    let mut reduce = Workload::new(
        OpKind::SeReduce,
        "se-reduce",
        Dims::new(g.n, g.c2, 1, 1),
        InputAccess::Reduce {
            elements_per_item: pooled,
            shared_across_c: false,
        },
    );
    reduce.input_bytes = (pooled * (g.n * g.c2) as f64).round() as u64 * B;
    // both FC layers; every tile needs the squeeze vector of its item
    reduce.weight_fixed = (g.c2 * h) as u64;
    reduce.weight_per_out_channel = h as u64;
    reduce.weight_bytes = 2 * (g.c2 * h) as u64 * B;
    reduce.macs = 2 * (g.n * g.c2 * h) as u64;
    out.push(reduce);

    let dims = Dims::new(items, g.c2, spatial.0, spatial.1);
    let mut scale = Workload::new(OpKind::SeScale, "se-scale", dims, InputAccess::Elementwise { operands: 1 });
    scale.input_bytes = dims.numel() * B;
    out.push(scale);
}

fn downsample_workload(g: &Geometry) -> Option<Workload> {
    g.downsample.then(|| {
        conv(
            OpKind::PointwiseConv,
            "downsample",
            Dims::new(g.n, g.c3, g.ho, g.wo),
            g.c0,
            1,
            1,
            g.stride,
            g.input_elems(),
        )
    })
}

fn static_workloads(g: &Geometry) -> Vec<Workload> {
    let mut out = vec![
        conv(
            OpKind::PointwiseConv,
            "conv1",
            Dims::new(g.n, g.c1, g.h, g.w),
            g.c0,
            1,
            1,
            1,
            g.input_elems(),
        ),
        conv(
            OpKind::Conv,
            "conv2",
            Dims::new(g.n, g.c2, g.ho, g.wo),
            g.c1 / g.groups,
            g.groups,
            3,
            g.stride,
            g.conv1_out_elems(),
        ),
    ];
    se_workloads(g, g.n, (g.ho, g.wo), (g.ho * g.wo) as f64, &mut out);
    out.extend(downsample_workload(g));
    out.push(with_residual(conv(
        OpKind::PointwiseConv,
        "conv3",
        Dims::new(g.n, g.c3, g.ho, g.wo),
        g.c2,
        1,
        1,
        1,
        (g.n * g.c2 * g.ho * g.wo) as u64,
    )));
    out
}

/// Pool-and-project masker producing two logits per cell of a
/// `cells_h x cells_w` grid; each cell pools `pool_area` input pixels.
fn pooled_masker(g: &Geometry, label: &'static str, cells_h: usize, cells_w: usize, pool_area: usize) -> Workload {
    let dims = Dims::new(g.n, 2, cells_h, cells_w);
    let mut m = Workload::new(
        OpKind::Masker,
        label,
        dims,
        InputAccess::Reduce {
            elements_per_item: (g.c0 * pool_area) as f64,
            shared_across_c: true,
        },
    );
    m.input_bytes = g.input_elems() * B;
    m.weight_per_out_channel = g.c0 as u64;
    m.weight_bytes = 2 * g.c0 as u64 * B;
    m.macs = g.input_elems() + (g.n * cells_h * cells_w * 2 * g.c0) as u64;
    m
}

fn layer_workloads(g: &Geometry, r: f64) -> Vec<Workload> {
    let mut out = vec![pooled_masker(g, "masker", 1, 1, g.h * g.w)];
    for mut wl in static_workloads(g) {
        // the projection shortcut produces the output of a skipped block
        if wl.label != "downsample" {
            wl.expectation = r;
        }
        out.push(wl);
    }
    out
}

fn spatial_workloads(
    g: &Geometry,
    s: usize,
    prof: &ActivationProfile,
    flags: FusionFlags,
    active_patches: Option<usize>,
) -> Result<Vec<Workload>> {
    let (gh, gw) = (g.ho / s, g.wo / s);
    let cells = gh * gw * g.n;
    let p = match active_patches {
        Some(p) if p > cells => {
            return Err(Error::invalid(format!("{p} active patches exceed {cells} cells")));
        }
        Some(p) => p,
        None => (prof.r_spatial * cells as f64).round() as usize,
    };
    let extent = (s - 1) * g.stride + 3;
    let mut out = Vec::new();

    if flags.fuse_masker_conv1 {
        // The collapsed masker filter W0 - W1 is one extra output channel.
        // It rides along in the conv1 tiles (each tile loads the filter)
        // instead of forming a ragged channel tile of its own.
        let mut fused = conv(
            OpKind::MaskerConvFused,
            "masker-conv1",
            Dims::new(g.n, g.c1, g.h, g.w),
            g.c0,
            1,
            1,
            1,
            g.input_elems(),
        );
        let pixels = (g.n * g.h * g.w) as u64;
        fused.macs += pixels * g.c0 as u64;
        fused.weight_fixed += g.c0 as u64;
        fused.weight_bytes += g.c0 as u64 * B;
        fused.output_bytes += pixels * B;
        out.push(fused);
    } else {
        out.push(pooled_masker(g, "masker", gh, gw, s * s * g.stride * g.stride));
        out.push(conv(
            OpKind::PointwiseConv,
            "conv1",
            Dims::new(g.n, g.c1, g.h, g.w),
            g.c0,
            1,
            1,
            1,
            g.input_elems(),
        ));
    }

    // unique conv1 pixels behind the active patches
    let dilated_elems = (prof.r_spatial_dilated * g.conv1_out_elems() as f64).round() as u64;
    let gathered = (p * g.c1 * extent * extent) as u64;
    let conv2_in = if flags.fuse_gather_conv {
        dilated_elems
    } else {
        let dims = Dims::new(p, g.c1, extent, extent);
        let mut gather = Workload::new(OpKind::Gather, "gather", dims, InputAccess::Elementwise { operands: 1 });
        gather.input_bytes = dilated_elems * B;
        out.push(gather);
        gathered
    };
    out.push(conv(
        OpKind::GatherConv,
        if flags.fuse_gather_conv { "gather-conv2" } else { "conv2" },
        Dims::new(p, g.c2, s, s),
        g.c1 / g.groups,
        g.groups,
        3,
        g.stride,
        conv2_in,
    ));
    let per_image = if g.n > 0 { (p * s * s) as f64 / g.n as f64 } else { 0.0 };
    se_workloads(g, p, (s, s), per_image, &mut out);
    out.extend(downsample_workload(g));
    out.push(conv(
        OpKind::PointwiseConv,
        "conv3",
        Dims::new(p, g.c3, s, s),
        g.c2,
        1,
        1,
        1,
        (p * g.c2 * s * s) as u64,
    ));

    let patch_out = Dims::new(p, g.c3, s, s);
    if flags.fuse_scatter_add {
        // indexed read-modify-write into the shortcut tensor
        let mut sa = Workload::new(OpKind::ScatterAdd, "scatter-add", patch_out, InputAccess::Elementwise { operands: 2 });
        sa.input_bytes = 2 * patch_out.numel() * B;
        out.push(sa);
    } else {
        let mut sc = Workload::new(OpKind::Scatter, "scatter", patch_out, InputAccess::Elementwise { operands: 1 });
        sc.input_bytes = patch_out.numel() * B;
        // zero-filled full-resolution output
        sc.output_bytes = g.out_elems() * B;
        out.push(sc);
        let full = Dims::new(g.n, g.c3, g.ho, g.wo);
        let mut add = Workload::new(OpKind::Add, "add", full, InputAccess::Elementwise { operands: 2 });
        add.input_bytes = 2 * full.numel() * B;
        out.push(add);
    }
    Ok(out)
}

fn channel_workloads(g: &Geometry, gran: usize, r: f64, masker: ChannelMaskerKind) -> Vec<Workload> {
    let d = g.c2 / gran;
    let mut out = Vec::new();
    let dims = Dims::new(g.n, 2 * d, 1, 1);
    let mut m = Workload::new(
        OpKind::ChannelMaskerMlp,
        "masker",
        dims,
        InputAccess::Reduce {
            elements_per_item: (g.c0 * g.h * g.w) as f64,
            shared_across_c: true,
        },
    );
    m.input_bytes = g.input_elems() * B;
    match masker {
        ChannelMaskerKind::TwoLayer => {
            let h = channel_masker_hidden(d);
            m.weight_fixed = (g.c0 * h) as u64;
            m.weight_per_out_channel = h as u64;
            m.weight_bytes = (g.c0 * h + h * 2 * d) as u64 * B;
            m.macs = g.input_elems() + (g.n * (g.c0 * h + h * 2 * d)) as u64;
        }
        ChannelMaskerKind::OneLayer => {
            m.weight_per_out_channel = g.c0 as u64;
            m.weight_bytes = (g.c0 * 2 * d) as u64 * B;
            m.macs = g.input_elems() + (g.n * g.c0 * 2 * d) as u64;
        }
    }
    out.push(m);

    // Only whole groups can run, so the active group count at rate r is
    // modeled as k or k + 1 (k = floor(r * d)) with the mix that makes the
    // mean exactly r * d, and the convolutions are charged their expected
    // latency over the two. Weight gathering is folded into the convs.
    let x = (r * d as f64).clamp(0.0, d as f64);
    let k = ((x + 1e-9).floor() as usize).min(d);
    let frac = (x - k as f64).max(0.0);
    for (groups_on, weight) in [(k, 1.0 - frac), (k + 1, frac)] {
        if weight <= 1e-12 || groups_on > d {
            continue;
        }
        for mut w in channel_convs(g, gran * groups_on) {
            w.expectation = weight;
            out.push(w);
        }
    }
    se_workloads(g, g.n, (g.ho, g.wo), (g.ho * g.wo) as f64, &mut out);
    out.extend(downsample_workload(g));
    out
}

/// conv1, conv2 and conv3 with `active` of the inner channels computed.
/// MACs scale with the active fraction q: q for conv1 and conv3, q^2 for
/// conv2.
fn channel_convs(g: &Geometry, active: usize) -> Vec<Workload> {
    let q = active as f64 / g.c2 as f64;
    let scaled = |dense: usize, k: f64| (k * (g.n * dense) as f64).round() as u64;
    let mut conv1 = conv(
        OpKind::PointwiseConv,
        "conv1",
        Dims::new(g.n, active, g.h, g.w),
        g.c0,
        1,
        1,
        1,
        g.input_elems(),
    );
    conv1.macs = scaled(g.h * g.w * g.c1 * g.c0, q);
    let groups = g.groups.min(active.max(1));
    let in_per_group = if active == 0 { 0 } else { active.div_ceil(groups) };
    let mut conv2 = conv(
        OpKind::Conv,
        "conv2",
        Dims::new(g.n, active, g.ho, g.wo),
        in_per_group,
        groups,
        3,
        g.stride,
        (g.n * active * g.h * g.w) as u64,
    );
    conv2.macs = scaled(g.ho * g.wo * g.c2 * (g.c1 / g.groups) * 9, q * q);
    let mut conv3 = with_residual(conv(
        OpKind::PointwiseConv,
        "conv3",
        Dims::new(g.n, g.c3, g.ho, g.wo),
        active,
        1,
        1,
        1,
        (g.n * active * g.ho * g.wo) as u64,
    ));
    conv3.macs = scaled(g.ho * g.wo * g.c3 * g.c2, q);
    vec![conv1, conv2, conv3]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TensorShape;

    fn stage1() -> BlockSpec {
        BlockSpec::bottleneck(TensorShape::new(256, 56, 56).unwrap(), 64, 256, 1, 1, None).unwrap()
    }

    #[test]
    fn zero_rate_spatial_has_empty_patch_work() {
        let b = stage1();
        let cfg = DynamicConfig::spatial(4);
        let prof = ActivationProfile::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let wls = block_workloads(&b, &cfg, &prof, FusionFlags::ALL, 1).unwrap();
        for wl in &wls {
            match wl.kind {
                OpKind::MaskerConvFused => assert!(wl.macs > 0),
                OpKind::GatherConv | OpKind::ScatterAdd => assert_eq!(wl.dims.p, 0),
                _ => {}
            }
        }
    }

    #[test]
    fn gather_tile_geometry_has_halo() {
        let b = BlockSpec::bottleneck(TensorShape::new(4, 8, 8).unwrap(), 4, 4, 1, 1, None).unwrap();
        let wls = block_workloads_with(
            &b,
            &DynamicConfig::spatial(2),
            &ActivationProfile::full(),
            FusionFlags::ALL,
            1,
            &WorkloadOptions {
                active_patches: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let gc = wls.iter().find(|w| w.kind == OpKind::GatherConv).unwrap();
        assert_eq!(gc.dims, Dims::new(3, 4, 2, 2));
        assert_eq!(gc.window_geometry(3, 4, 2, 2), Some([3, 4, 4, 4]));
    }

    #[test]
    fn batch_scales_patch_count() {
        let b = stage1();
        let cfg = DynamicConfig::spatial(4);
        let prof = ActivationProfile::from_rate(&b, &cfg, 0.5).unwrap();
        let p = |n| {
            block_workloads(&b, &cfg, &prof, FusionFlags::ALL, n)
                .unwrap()
                .into_iter()
                .find(|w| w.kind == OpKind::GatherConv)
                .unwrap()
                .dims
                .p
        };
        assert_eq!(p(1), 98);
        assert_eq!(p(128), 128 * 98);
    }

    #[test]
    fn fused_masker_adds_one_channel() {
        let b = stage1();
        let wls = block_workloads(&b, &DynamicConfig::spatial(4), &ActivationProfile::full(), FusionFlags::ALL, 1).unwrap();
        assert_eq!(wls[0].kind, OpKind::MaskerConvFused);
        assert_eq!(wls[0].dims.c, 64);
        assert_eq!(wls[0].macs, 56 * 56 * 65 * 256);
        assert_eq!(wls[0].weight_bytes, 65 * 256 * B);
        assert_eq!(wls[0].output_bytes, 56 * 56 * 65 * B);
    }

    #[test]
    fn channel_macs_follow_rates() {
        let b = stage1();
        let prof = ActivationProfile::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let wls = block_workloads(&b, &DynamicConfig::channel(1), &prof, FusionFlags::NONE, 1).unwrap();
        let st = block_workloads(&b, &DynamicConfig::static_block(), &prof, FusionFlags::NONE, 1).unwrap();
        let macs = |v: &[Workload], l: &str| v.iter().find(|w| w.label == l).unwrap().macs;
        assert_eq!(macs(&wls, "conv1") * 2, macs(&st, "conv1"));
        assert_eq!(macs(&wls, "conv2") * 4, macs(&st, "conv2"));
        assert_eq!(macs(&wls, "conv3") * 2, macs(&st, "conv3"));
    }

    #[test]
    fn fusion_parse() {
        assert_eq!(FusionFlags::parse("all").unwrap(), FusionFlags::ALL);
        assert_eq!(FusionFlags::parse("none").unwrap(), FusionFlags::NONE);
        let f = FusionFlags::parse("masker,scatter").unwrap();
        assert!(f.fuse_masker_conv1 && !f.fuse_gather_conv && f.fuse_scatter_add);
        assert_eq!(f.label(), "masker,scatter");
        assert!(FusionFlags::parse("bogus").is_err());
        assert_eq!(FusionFlags::all_combinations()[7], FusionFlags::ALL);
    }
}
