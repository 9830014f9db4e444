use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Paradigm, TensorShape};

use super::NetworkSpec;

/// What a plan's values partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    /// Patch edge per stage; must divide the stage's output feature size.
    Spatial,
    /// Channel group size per stage; must divide the stage's inner width.
    Channel,
}

impl PlanKind {
    pub fn for_paradigm(p: Paradigm) -> Option<Self> {
        match p {
            Paradigm::Spatial => Some(PlanKind::Spatial),
            Paradigm::Channel => Some(PlanKind::Channel),
            _ => None,
        }
    }
}

/// One granularity per stage, written `4-4-2-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GranularityPlan {
    pub values: Vec<usize>,
}

impl GranularityPlan {
    pub fn uniform(value: usize, stages: usize) -> Self {
        Self {
            values: vec![value; stages],
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let values = text
            .trim()
            .split('-')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|v| *v > 0)
                    .ok_or_else(|| Error::Parse {
                        what: "granularity plan".into(),
                        message: format!("`{part}` in `{text}` is not a positive integer"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values })
    }

    pub fn validate(&self, net: &NetworkSpec, kind: PlanKind) -> Result<()> {
        if self.values.len() != net.stages.len() {
            return Err(Error::PlanLengthMismatch {
                expected: net.stages.len(),
                got: self.values.len(),
            });
        }
        for (st, &v) in net.stages.iter().zip(&self.values) {
            let t = &st.block_template;
            match kind {
                PlanKind::Spatial => {
                    let TensorShape { height, width, .. } = t.output_shape();
                    for (dim, what) in [(height, "output height"), (width, "output width")] {
                        if dim % v != 0 {
                            return Err(Error::GranularityMismatch { value: v, dim, what });
                        }
                    }
                }
                PlanKind::Channel => {
                    let dim = t.conv2.out_channels;
                    if dim % v != 0 {
                        return Err(Error::GranularityMismatch {
                            value: v,
                            dim,
                            what: "inner width",
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for GranularityPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Parses a dash plan and validates it against `net` for `paradigm`.
/// Paradigms without a granularity accept any well-formed plan of the
/// right length.
pub fn parse_plan(text: &str, net: &NetworkSpec, paradigm: Paradigm) -> Result<GranularityPlan> {
    let plan = GranularityPlan::parse_str(text)?;
    match PlanKind::for_paradigm(paradigm) {
        Some(kind) => plan.validate(net, kind)?,
        None if plan.values.len() != net.stages.len() => {
            return Err(Error::PlanLengthMismatch {
                expected: net.stages.len(),
                got: plan.values.len(),
            })
        }
        None => {}
    }
    Ok(plan)
}
