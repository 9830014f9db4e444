//! Seeded equivalence cases for the sparse pipeline.
//!
//! A vector file is TOML with one `[[case]]` table per case:
//!
//! ```toml
//! [[case]]
//! paradigm = "spatial"     # spatial | channel | layer | static
//! batch = 2
//! channels = 8             # block input channels
//! height = 16
//! width = 16
//! bottleneck = 4           # inner width
//! out_channels = 8
//! stride = 1
//! groups = 1               # optional, groups of the 3x3
//! granularity = 4          # S or G; ignored for layer and static
//! density = 0.5            # optional, probability a mask unit is active
//! seed = 17                # weights, input and masks derive from it
//! max_deviation = 1e-9
//! ```

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{enumerate_granularities, BlockSpec, Paradigm, TensorShape};

use super::block::{block_forward_dense_masked, block_forward_sparse_with, BlockWeights, SparseOptions};
use super::mask::{BlockMasks, ChannelMask, SpatialMask};
use super::tensor::Tensor;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorCase {
    pub paradigm: Paradigm,
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub bottleneck: usize,
    pub out_channels: usize,
    pub stride: usize,
    #[serde(default = "one")]
    pub groups: usize,
    #[serde(default = "one")]
    pub granularity: usize,
    #[serde(default = "half")]
    pub density: f64,
    pub seed: u64,
    #[serde(default = "tolerance")]
    pub max_deviation: f64,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct VectorFile {
    #[serde(default)]
    case: Vec<VectorCase>,
}

pub fn parse_vectors(src: &str) -> Result<Vec<VectorCase>> {
    let file: VectorFile = toml::from_str(src).map_err(|e| Error::Parse {
        what: "test vectors".into(),
        message: e.to_string(),
    })?;
    Ok(file.case)
}

pub fn write_vectors(cases: &[VectorCase]) -> String {
    toml::to_string(&VectorFile { case: cases.to_vec() }).expect("vectors serialize")
}

impl VectorCase {
    pub fn block(&self) -> Result<BlockSpec> {
        BlockSpec::bottleneck(
            TensorShape::new(self.channels, self.height, self.width)?,
            self.bottleneck,
            self.out_channels,
            self.stride,
            self.groups,
            None,
        )
    }

    /// Input, weights and masks, all derived from `seed`.
    pub fn materialize(&self) -> Result<(Tensor, BlockWeights, BlockMasks)> {
        let spec = self.block()?;
        if self.batch == 0 {
            return Err(Error::invalid("batch must be positive"));
        }
        let weights = BlockWeights::random(&spec, self.seed)?;
        let x = Tensor::random(self.batch, spec.input_shape, self.seed ^ 0x5eed);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(31).wrapping_add(7));
        let out = spec.output_shape();
        let masks = match self.paradigm {
            Paradigm::Static => BlockMasks::Static,
            Paradigm::Layer => BlockMasks::Layer((0..self.batch).map(|_| rng.gen_bool(self.density)).collect()),
            Paradigm::Spatial => {
                let s = self.granularity;
                for (dim, what) in [(out.height, "output height"), (out.width, "output width")] {
                    if s == 0 || dim % s != 0 {
                        return Err(Error::GranularityMismatch { value: s, dim, what });
                    }
                }
                BlockMasks::Spatial(
                    (0..self.batch)
                        .map(|_| SpatialMask::random(s, out.height / s, out.width / s, self.density, &mut rng))
                        .collect(),
                )
            }
            Paradigm::Channel => {
                let g = self.granularity;
                if g == 0 || self.bottleneck % g != 0 {
                    return Err(Error::GranularityMismatch {
                        value: g,
                        dim: self.bottleneck,
                        what: "inner width",
                    });
                }
                BlockMasks::Channel(
                    (0..self.batch)
                        .map(|_| ChannelMask::random(g, self.bottleneck / g, self.density, &mut rng))
                        .collect(),
                )
            }
        };
        Ok((x, weights, masks))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub deviation: f64,
    pub passed: bool,
}

pub fn run_case(case: &VectorCase, opts: SparseOptions) -> Result<CaseResult> {
    let (x, w, masks) = case.materialize()?;
    let sparse = block_forward_sparse_with(&x, &w, &masks, opts)?;
    let dense = block_forward_dense_masked(&x, &w, &masks)?;
    let deviation = sparse.max_abs_diff(&dense)?;
    Ok(CaseResult {
        deviation,
        passed: deviation < case.max_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cases: usize,
    pub failures: usize,
    /// Worst deviation per paradigm that had at least one case.
    pub worst: Vec<(Paradigm, f64)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn run_suite(cases: &[VectorCase], opts: SparseOptions) -> Result<SuiteReport> {
    let mut worst: Vec<(Paradigm, f64)> = Vec::new();
    let mut failures = 0;
    for case in cases {
        let r = run_case(case, opts)?;
        if !r.passed {
            failures += 1;
        }
        match worst.iter_mut().find(|(p, _)| *p == case.paradigm) {
            Some(entry) => entry.1 = entry.1.max(r.deviation),
            None => worst.push((case.paradigm, r.deviation)),
        }
    }
    worst.sort_by_key(|(p, _)| Paradigm::ALL.iter().position(|q| q == p));
    Ok(SuiteReport {
        cases: cases.len(),
        failures,
        worst,
    })
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, v: &[T]) -> T {
    v[rng.gen_range(0..v.len())]
}

/// `per_paradigm` random cases for each dynamic paradigm, with features up
/// to 32x32 and at most 16 channels.
pub fn default_suite(per_paradigm: usize, seed: u64) -> Vec<VectorCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * per_paradigm);
    for paradigm in [Paradigm::Spatial, Paradigm::Channel, Paradigm::Layer] {
        for _ in 0..per_paradigm {
            let stride = pick(&mut rng, &[1, 1, 2]);
            let bottleneck = rng.gen_range(1..=16);
            let groups = pick(&mut rng, &enumerate_granularities(bottleneck));
            let channels = rng.gen_range(1..=16);
            let out_channels = if stride == 1 && rng.gen_bool(0.5) { channels } else { rng.gen_range(1..=16) };
            let (height, width, granularity) = match paradigm {
                Paradigm::Spatial => {
                    let s = pick(&mut rng, &[1, 2, 4, 8]);
                    let max_cells = (32 / (s * stride)).max(1);
                    let gh = rng.gen_range(1..=max_cells);
                    let gw = rng.gen_range(1..=max_cells);
                    (gh * s * stride, gw * s * stride, s)
                }
                Paradigm::Channel => {
                    let g = pick(&mut rng, &enumerate_granularities(bottleneck));
                    (rng.gen_range(3..=32), rng.gen_range(3..=32), g)
                }
                _ => (rng.gen_range(3..=32), rng.gen_range(3..=32), 1),
            };
            out.push(VectorCase {
                paradigm,
                batch: rng.gen_range(1..=2),
                channels,
                height,
                width,
                bottleneck,
                out_channels,
                stride,
                groups,
                granularity,
                density: rng.gen_range(0.0..=1.0),
                seed: rng.gen::<u32>() as u64,
                max_deviation: DEFAULT_TOLERANCE,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_file() {
        let cases = default_suite(2, 1);
        let text = write_vectors(&cases);
        assert_eq!(parse_vectors(&text).unwrap(), cases);
        assert!(parse_vectors("").unwrap().is_empty());
        assert!(parse_vectors("[[case]]\nparadigm='spatial'\n").is_err());
    }

    #[test]
    fn small_suite_passes_and_fault_is_caught() {
        let cases = default_suite(5, 2);
        let rep = run_suite(&cases, SparseOptions::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let spatial = VectorCase {
            paradigm: Paradigm::Spatial,
            batch: 1,
            channels: 4,
            height: 8,
            width: 8,
            bottleneck: 4,
            out_channels: 4,
            stride: 1,
            groups: 1,
            granularity: 2,
            density: 1.0,
            seed: 3,
            max_deviation: DEFAULT_TOLERANCE,
        };
        let bad = run_case(&spatial, SparseOptions { misplace_patch: Some(0) }).unwrap();
        assert!(!bad.passed);
    }
}
