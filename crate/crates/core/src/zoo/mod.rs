//! Network architectures built from stage descriptions, granularity plans,
//! and whole-network prediction.
//!
//! Architecture files are TOML:
//!
//! ```toml
//! name = "resnet50"
//! input = [3, 224, 224]      # channels, height, width
//! classes = 1000
//!
//! [stem]
//! channels = 64
//! kernel = 7
//! stride = 2
//! max_pool = true            # 3x3 stride-2 max pool after the stem conv
//!
//! [[stages]]
//! depth = 3                  # blocks in the stage
//! width = 256                # block output channels
//! bottleneck_ratio = 0.25    # inner width = width * ratio
//! groups = 1                 # optional, groups of the 3x3 conv
//! se_reduction = 4           # optional, SE hidden = block input / 4
//! stride = 1                 # stride of the first block
//! ```

mod plan;
mod report;

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{BlockSpec, ConvLayerSpec, DynamicConfig, Paradigm, TensorShape};

pub use plan::{parse_plan, GranularityPlan, PlanKind};
pub use report::{
    predict_network, sweep, BlockReport, NetworkReport, Rates, SweepGrid, SweepRequest, SweepRow,
};

const BUILTIN: [(&str, &str); 4] = [
    ("resnet50", include_str!("../../data/archs/resnet50.toml")),
    ("resnet101", include_str!("../../data/archs/resnet101.toml")),
    ("regnety-400mf", include_str!("../../data/archs/regnety-400mf.toml")),
    ("regnety-800mf", include_str!("../../data/archs/regnety-800mf.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StemSpec {
    pub conv: ConvLayerSpec,
    pub max_pool: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub block_count: usize,
    /// The repeated block of the stage (input width equals output width).
    pub block_template: BlockSpec,
    pub stride_first: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: TensorShape,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub classifier_features: usize,
    pub num_classes: usize,
}

/// A block placed in a network: 1-based stage number and 0-based index
/// within the stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetBlock {
    pub stage: usize,
    pub index: usize,
    pub spec: BlockSpec,
}

impl NetBlock {
    pub fn id(&self) -> String {
        format!("s{}b{}", self.stage, self.index)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchFile {
    name: String,
    input: [usize; 3],
    #[serde(default = "default_classes")]
    classes: usize,
    stem: StemFile,
    stages: Vec<StageFile>,
}

fn default_classes() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StemFile {
    channels: usize,
    kernel: usize,
    stride: usize,
    #[serde(default)]
    max_pool: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFile {
    depth: usize,
    width: usize,
    bottleneck_ratio: f64,
    #[serde(default = "one")]
    groups: usize,
    se_reduction: Option<usize>,
    #[serde(default = "one")]
    stride: usize,
}

fn one() -> usize {
    1
}

impl NetworkSpec {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: ArchFile = toml::from_str(src).map_err(|e| Error::Parse {
            what: "architecture".into(),
            message: e.to_string(),
        })?;
        let input_shape = TensorShape::new(file.input[0], file.input[1], file.input[2])?;
        let stem = StemSpec {
            conv: ConvLayerSpec::new(input_shape.channels, file.stem.channels, file.stem.kernel, file.stem.stride, 1)?,
            max_pool: file.stem.max_pool,
        };
        let mut stages = Vec::with_capacity(file.stages.len());
        let mut shape = stem_output(&stem, input_shape)?;
        for (i, st) in file.stages.iter().enumerate() {
            if st.depth == 0 {
                return Err(Error::invalid(format!("stage {} has no blocks", i + 1)));
            }
            let inner = (st.width as f64 * st.bottleneck_ratio).round() as usize;
            if inner == 0 {
                return Err(Error::invalid(format!("stage {} has zero inner width", i + 1)));
            }
            let out_len = |n: usize| (n - 1) / st.stride + 1;
            let steady_in = TensorShape::new(st.width, out_len(shape.height), out_len(shape.width))?;
            let template = BlockSpec::bottleneck(steady_in, inner, st.width, 1, st.groups, st.se_reduction)?;
            stages.push(StageSpec {
                block_count: st.depth,
                block_template: template,
                stride_first: st.stride == 2,
            });
            shape = steady_in;
        }
        let classifier_features = shape.channels;
        let net = Self {
            name: file.name,
            input_shape,
            stem,
            stages,
            classifier_features,
            num_classes: file.classes,
        };
        net.check_chaining()?;
        Ok(net)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Same architecture evaluated at a different input resolution.
    pub fn with_input(&self, height: usize, width: usize) -> Result<Self> {
        let mut net = self.clone();
        net.input_shape = TensorShape::new(self.input_shape.channels, height, width)?;
        let mut shape = stem_output(&net.stem, net.input_shape)?;
        for st in &mut net.stages {
            let stride = if st.stride_first { 2 } else { 1 };
            let h = (shape.height - 1) / stride + 1;
            let w = (shape.width - 1) / stride + 1;
            st.block_template.input_shape = TensorShape::new(st.block_template.input_shape.channels, h, w)?;
            shape = st.block_template.input_shape;
        }
        net.check_chaining()?;
        Ok(net)
    }

    fn check_chaining(&self) -> Result<()> {
        let blocks = self.blocks()?;
        let mut expected = stem_output(&self.stem, self.input_shape)?;
        for b in &blocks {
            if b.spec.input_shape != expected {
                return Err(Error::ShapeMismatch(format!(
                    "block {} expects {} but predecessor produces {}",
                    b.id(),
                    b.spec.input_shape,
                    expected
                )));
            }
            expected = b.spec.output_shape();
        }
        if expected.channels != self.classifier_features {
            return Err(Error::ShapeMismatch("classifier width does not match trunk".into()));
        }
        Ok(())
    }

    pub fn stem_output_shape(&self) -> TensorShape {
        stem_output(&self.stem, self.input_shape).expect("stem validated at construction")
    }

    /// All blocks in execution order.
    pub fn blocks(&self) -> Result<Vec<NetBlock>> {
        let mut out = Vec::new();
        let mut input = stem_output(&self.stem, self.input_shape)?;
        for (si, st) in self.stages.iter().enumerate() {
            let t = st.block_template;
            for bi in 0..st.block_count {
                let spec = if bi == 0 {
                    BlockSpec::bottleneck(
                        input,
                        t.conv2.out_channels,
                        t.conv3.out_channels,
                        if st.stride_first { 2 } else { 1 },
                        t.conv2.groups,
                        t.se_reduction,
                    )?
                } else {
                    BlockSpec { input_shape: input, ..t }
                };
                input = spec.output_shape();
                out.push(NetBlock {
                    stage: si + 1,
                    index: bi,
                    spec,
                });
            }
        }
        Ok(out)
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.block_count).sum()
    }

    pub fn block(&self, stage: usize, index: usize) -> Result<NetBlock> {
        self.blocks()?
            .into_iter()
            .find(|b| b.stage == stage && b.index == index)
            .ok_or_else(|| Error::invalid(format!("no block s{stage}b{index} in {}", self.name)))
    }

    /// Output feature shape of each stage.
    pub fn stage_output_shapes(&self) -> Vec<TensorShape> {
        self.stages.iter().map(|s| s.block_template.output_shape()).collect()
    }

    pub fn stem_macs(&self) -> u64 {
        let out = self.stem.conv.output_shape(self.input_shape).expect("stem validated");
        crate::flops::conv_macs(&self.stem.conv, out).expect("stem validated")
    }

    pub fn classifier_macs(&self) -> u64 {
        (self.classifier_features * self.num_classes) as u64
    }

    /// Per-block dynamic configuration for a paradigm and optional plan.
    /// Layer skipping uses one patch per block; the plan is ignored for the
    /// layer and static paradigms.
    pub fn block_configs(
        &self,
        paradigm: Paradigm,
        plan: Option<&GranularityPlan>,
    ) -> Result<Vec<DynamicConfig>> {
        let blocks = self.blocks()?;
        let need_plan = |kind: PlanKind| -> Result<&GranularityPlan> {
            let p = plan.ok_or(Error::ParadigmFieldMissing {
                paradigm: if kind == PlanKind::Spatial { "spatial" } else { "channel" },
                field: "plan",
            })?;
            p.validate(self, kind)?;
            Ok(p)
        };
        blocks
            .iter()
            .map(|b| {
                let cfg = match paradigm {
                    Paradigm::Spatial => DynamicConfig::spatial(need_plan(PlanKind::Spatial)?.values[b.stage - 1]),
                    Paradigm::Channel => DynamicConfig::channel(need_plan(PlanKind::Channel)?.values[b.stage - 1]),
                    Paradigm::Layer => DynamicConfig::layer(),
                    Paradigm::Static => DynamicConfig::static_block(),
                };
                crate::model::validate_config(&b.spec, &cfg)
            })
            .collect()
    }
}

fn stem_output(stem: &StemSpec, input: TensorShape) -> Result<TensorShape> {
    let out = stem.conv.output_shape(input)?;
    Ok(if stem.max_pool {
        // 3x3 stride-2 max pool, padding 1
        TensorShape {
            channels: out.channels,
            height: (out.height - 1) / 2 + 1,
            width: (out.width - 1) / 2 + 1,
        }
    } else {
        out
    })
}

/// Builds a shipped network by name, or loads an architecture file.
pub fn build_network(name_or_path: &str) -> Result<NetworkSpec> {
    let key = name_or_path.to_ascii_lowercase().replace('_', "-");
    if let Some((_, src)) = BUILTIN.iter().find(|(n, _)| *n == key) {
        return NetworkSpec::from_toml_str(src);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        return NetworkSpec::from_file(path);
    }
    Err(Error::UnknownNetwork(name_or_path.to_string()))
}
