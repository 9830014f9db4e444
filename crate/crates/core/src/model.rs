//! Domain types shared by every model: tensor and layer shapes, bottleneck
//! blocks, the dynamic-inference configuration of a block and the activation
//! rates that drive FLOPs and latency estimates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per element; all traffic is accounted in single precision.
pub const ELEMENT_BYTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A 2-D convolution with square odd kernel and "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    #[serde(default)]
    pub has_bias: bool,
}

impl ConvLayerSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        let layer = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            groups,
            has_bias: false,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn pointwise(in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, 1, stride, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return Err(Error::ShapeMismatch(
                "conv channels and groups must be positive".into(),
            ));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::ShapeMismatch(format!(
                "kernel must be a positive odd integer, got {}",
                self.kernel
            )));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::ShapeMismatch(format!(
                "stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::ShapeMismatch(format!(
                "channels {}->{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Output spatial size along one axis for an input of size `n`.
    pub fn output_len(&self, n: usize) -> usize {
        (n + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape> {
        if input.channels != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "layer expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        Ok(TensorShape {
            channels: self.out_channels,
            height: self.output_len(input.height),
            width: self.output_len(input.width),
        })
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_per_group() * self.kernel * self.kernel
    }
}

/// A residual bottleneck block: 1x1 reduce, 3x3 (possibly grouped, possibly
/// strided), optional squeeze-excitation on the 3x3 output, 1x1 expand, and
/// an identity or 1x1 projection shortcut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub conv1: ConvLayerSpec,
    pub conv2: ConvLayerSpec,
    pub conv3: ConvLayerSpec,
    pub se_reduction: Option<usize>,
    pub has_downsample: bool,
    pub input_shape: TensorShape,
}

impl BlockSpec {
    /// Standard bottleneck from input shape, inner width, output channels,
    /// stride (on the 3x3) and group count. A projection shortcut is added
    /// whenever the residual shape changes.
    pub fn bottleneck(
        input_shape: TensorShape,
        width: usize,
        out_channels: usize,
        stride: usize,
        groups: usize,
        se_reduction: Option<usize>,
    ) -> Result<Self> {
        let block = Self {
            conv1: ConvLayerSpec::pointwise(input_shape.channels, width, 1)?,
            conv2: ConvLayerSpec::new(width, width, 3, stride, groups)?,
            conv3: ConvLayerSpec::pointwise(width, out_channels, 1)?,
            se_reduction,
            has_downsample: stride != 1 || input_shape.channels != out_channels,
            input_shape,
        };
        block.validate()?;
        Ok(block)
    }

    pub fn validate(&self) -> Result<()> {
        for layer in [&self.conv1, &self.conv2, &self.conv3] {
            layer.validate()?;
        }
        if self.conv1.kernel != 1 || self.conv3.kernel != 1 || self.conv2.kernel != 3 {
            return Err(Error::ShapeMismatch(
                "bottleneck requires 1x1, 3x3, 1x1 kernels".into(),
            ));
        }
        if self.conv1.stride != 1 || self.conv3.stride != 1 {
            return Err(Error::ShapeMismatch(
                "only the 3x3 convolution may be strided".into(),
            ));
        }
        if self.conv1.in_channels != self.input_shape.channels {
            return Err(Error::ShapeMismatch(format!(
                "conv1 expects {} channels, block input has {}",
                self.conv1.in_channels, self.input_shape.channels
            )));
        }
        if self.conv1.out_channels != self.conv2.in_channels
            || self.conv2.out_channels != self.conv3.in_channels
        {
            return Err(Error::ShapeMismatch(
                "bottleneck convolutions are not chained consistently".into(),
            ));
        }
        if !self.has_downsample
            && (self.conv2.stride != 1 || self.conv3.out_channels != self.input_shape.channels)
        {
            return Err(Error::ShapeMismatch(
                "identity shortcut requires stride 1 and equal input/output channels".into(),
            ));
        }
        if self.input_shape.height == 0 || self.input_shape.width == 0 {
            return Err(Error::ShapeMismatch("empty block input".into()));
        }
        if let Some(r) = self.se_reduction {
            if r == 0 {
                return Err(Error::ShapeMismatch("se_reduction must be positive".into()));
            }
        }
        Ok(())
    }

    /// Shape of conv1's output (input resolution, inner width).
    pub fn mid_shape(&self) -> TensorShape {
        TensorShape {
            channels: self.conv1.out_channels,
            height: self.input_shape.height,
            width: self.input_shape.width,
        }
    }

    /// Shape after the strided 3x3 (the inner width at output resolution).
    pub fn inner_output_shape(&self) -> TensorShape {
        TensorShape {
            channels: self.conv2.out_channels,
            height: self.conv2.output_len(self.input_shape.height),
            width: self.conv2.output_len(self.input_shape.width),
        }
    }

    pub fn output_shape(&self) -> TensorShape {
        TensorShape {
            channels: self.conv3.out_channels,
            ..self.inner_output_shape()
        }
    }

    pub fn downsample(&self) -> Option<ConvLayerSpec> {
        self.has_downsample.then_some(ConvLayerSpec {
            in_channels: self.input_shape.channels,
            out_channels: self.conv3.out_channels,
            kernel: 1,
            stride: self.conv2.stride,
            groups: 1,
            has_bias: false,
        })
    }

    /// Hidden width of the squeeze-excitation MLP (input width / reduction).
    pub fn se_hidden(&self) -> Option<usize> {
        self.se_reduction
            .map(|r| (self.input_shape.channels / r).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Spatial,
    Channel,
    Layer,
    Static,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [
        Paradigm::Spatial,
        Paradigm::Channel,
        Paradigm::Layer,
        Paradigm::Static,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Paradigm::Spatial => "spatial",
            Paradigm::Channel => "channel",
            Paradigm::Layer => "layer",
            Paradigm::Static => "static",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(Paradigm::Spatial),
            "channel" => Ok(Paradigm::Channel),
            "layer" => Ok(Paradigm::Layer),
            "static" => Ok(Paradigm::Static),
            other => Err(Error::invalid(format!("unknown paradigm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DynamicConfig {
    pub paradigm: Paradigm,
    pub spatial_granularity: Option<usize>,
    pub channel_granularity: Option<usize>,
}

impl DynamicConfig {
    pub fn spatial(s: usize) -> Self {
        Self {
            paradigm: Paradigm::Spatial,
            spatial_granularity: Some(s),
            channel_granularity: None,
        }
    }

    pub fn channel(g: usize) -> Self {
        Self {
            paradigm: Paradigm::Channel,
            spatial_granularity: None,
            channel_granularity: Some(g),
        }
    }

    pub fn layer() -> Self {
        Self {
            paradigm: Paradigm::Layer,
            spatial_granularity: None,
            channel_granularity: None,
        }
    }

    pub fn static_block() -> Self {
        Self {
            paradigm: Paradigm::Static,
            spatial_granularity: None,
            channel_granularity: None,
        }
    }

    /// Patch edge for the spatial mask. Layer skipping is a single patch
    /// covering the whole output feature.
    pub fn patch_size(&self, block: &BlockSpec) -> Option<usize> {
        match self.paradigm {
            Paradigm::Spatial => self.spatial_granularity,
            Paradigm::Layer => {
                let out = block.output_shape();
                Some(out.height.max(out.width))
            }
            _ => None,
        }
    }
}

/// Fractions of computed units. Only the fields relevant to a block's
/// paradigm are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationProfile {
    pub r_spatial: f64,
    pub r_spatial_dilated: f64,
    pub r_channel: f64,
    pub r_layer: f64,
}

impl ActivationProfile {
    pub fn new(r_spatial: f64, r_spatial_dilated: f64, r_channel: f64, r_layer: f64) -> Result<Self> {
        let p = Self {
            r_spatial,
            r_spatial_dilated,
            r_channel,
            r_layer,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn full() -> Self {
        Self {
            r_spatial: 1.0,
            r_spatial_dilated: 1.0,
            r_channel: 1.0,
            r_layer: 1.0,
        }
    }

    /// A single activation rate applied to the block's paradigm; the dilated
    /// spatial rate falls back to the i.i.d.-patch estimate.
    pub fn from_rate(block: &BlockSpec, cfg: &DynamicConfig, r: f64) -> Result<Self> {
        check_rate("rate", r)?;
        let dilated = match (cfg.paradigm, cfg.patch_size(block)) {
            (Paradigm::Spatial, Some(s)) => crate::flops::default_dilated_rate(block, s, r),
            _ => r,
        };
        Self::new(r, dilated.max(r), r, r)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("r_spatial", self.r_spatial)?;
        check_rate("r_spatial_dilated", self.r_spatial_dilated)?;
        check_rate("r_channel", self.r_channel)?;
        check_rate("r_layer", self.r_layer)?;
        if self.r_spatial_dilated < self.r_spatial {
            return Err(Error::invalid(format!(
                "dilated rate {} below spatial rate {}",
                self.r_spatial_dilated, self.r_spatial
            )));
        }
        Ok(())
    }
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("{name} = {r} outside [0, 1]")));
    }
    Ok(())
}

/// All positive divisors of `feature_size`, ascending.
pub fn enumerate_granularities(feature_size: usize) -> Vec<usize> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= feature_size {
        if feature_size % d == 0 {
            small.push(d);
            if d * d != feature_size {
                large.push(feature_size / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Checks that a dynamic configuration is realizable on `block`.
pub fn validate_config(block: &BlockSpec, cfg: &DynamicConfig) -> Result<DynamicConfig> {
    block.validate()?;
    match cfg.paradigm {
        Paradigm::Spatial => {
            let s = cfg.spatial_granularity.ok_or(Error::ParadigmFieldMissing {
                paradigm: "spatial",
                field: "spatial_granularity",
            })?;
            let out = block.output_shape();
            for (dim, what) in [(out.height, "output height"), (out.width, "output width")] {
                if s == 0 || dim % s != 0 {
                    return Err(Error::GranularityMismatch {
                        value: s,
                        dim,
                        what,
                    });
                }
            }
        }
        Paradigm::Channel => {
            let g = cfg.channel_granularity.ok_or(Error::ParadigmFieldMissing {
                paradigm: "channel",
                field: "channel_granularity",
            })?;
            let width = block.conv2.out_channels;
            if g == 0 || width % g != 0 {
                return Err(Error::GranularityMismatch {
                    value: g,
                    dim: width,
                    what: "conv2 width",
                });
            }
            if block.conv2.in_channels != block.conv2.out_channels {
                return Err(Error::ShapeMismatch(
                    "channel masks gate both sides of the 3x3 conv and need equal widths".into(),
                ));
            }
        }
        Paradigm::Layer | Paradigm::Static => {}
    }
    Ok(*cfg)
}
