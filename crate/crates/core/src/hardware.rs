//! Device descriptions for the latency model.
//!
//! Devices are described by a small TOML file. Frequencies are written in
//! MHz and bandwidth in decimal gigabytes per second (1 G = 1e9 bytes/s),
//! matching how vendor tables quote them; internally everything is Hz and
//! bytes/s.
//!
//! ```toml
//! name = "V100"
//! pe_count = 80              # processing engines (SMs)
//! fp32_per_pe = 64           # FP32 lanes per engine
//! frequency_mhz = 1500.0
//! bandwidth_g = 700.0        # off-chip bandwidth, 1e9 bytes/s
//! onchip_bandwidth_factor = 10.0   # optional, global->local multiplier
//! movement_efficiency = 1.0        # optional, in (0, 1]
//! const_overhead_us = 0.0          # optional, added once per block
//! fma_dual_issue = false           # optional, count 2 MACs/lane/cycle
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MHZ: f64 = 1e6;
const GIGA: f64 = 1e9;
const MICRO: f64 = 1e-6;

pub const DEFAULT_ONCHIP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareSpec {
    pub name: String,
    pub pe_count: u32,
    pub fp32_per_pe: u32,
    pub frequency_hz: f64,
    pub offchip_bandwidth_bytes_per_s: f64,
    pub onchip_bandwidth_factor: f64,
    pub movement_efficiency: f64,
    pub const_overhead_s: f64,
    /// Count a fused multiply-add as two MACs per lane per cycle.
    pub fma_dual_issue: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    name: String,
    pe_count: u32,
    fp32_per_pe: u32,
    frequency_mhz: f64,
    bandwidth_g: f64,
    #[serde(default = "default_onchip")]
    onchip_bandwidth_factor: f64,
    #[serde(default = "default_efficiency")]
    movement_efficiency: f64,
    #[serde(default)]
    const_overhead_us: f64,
    #[serde(default)]
    fma_dual_issue: bool,
}

fn default_onchip() -> f64 {
    DEFAULT_ONCHIP_FACTOR
}

fn default_efficiency() -> f64 {
    1.0
}

const PRESET_FILES: [(&str, &str); 5] = [
    ("V100", include_str!("../data/devices/v100.toml")),
    ("RTX3090", include_str!("../data/devices/rtx3090.toml")),
    ("RTX3060", include_str!("../data/devices/rtx3060.toml")),
    ("TX2", include_str!("../data/devices/tx2.toml")),
    ("Nano", include_str!("../data/devices/nano.toml")),
];

/// Names of the shipped device presets.
pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESET_FILES.iter().map(|(n, _)| *n)
}

impl HardwareSpec {
    pub fn preset(name: &str) -> Result<Self> {
        PRESET_FILES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, src)| Self::from_toml_str(src).expect("shipped device file is valid"))
            .ok_or_else(|| Error::UnknownDevice(name.to_string()))
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: DeviceFile = toml::from_str(src).map_err(|e| Error::Parse {
            what: "device spec".into(),
            message: e.to_string(),
        })?;
        let spec = Self {
            name: file.name,
            pe_count: file.pe_count,
            fp32_per_pe: file.fp32_per_pe,
            frequency_hz: file.frequency_mhz * MHZ,
            offchip_bandwidth_bytes_per_s: file.bandwidth_g * GIGA,
            onchip_bandwidth_factor: file.onchip_bandwidth_factor,
            movement_efficiency: file.movement_efficiency,
            const_overhead_s: file.const_overhead_us * MICRO,
            fma_dual_issue: file.fma_dual_issue,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        let file = DeviceFile {
            name: self.name.clone(),
            pe_count: self.pe_count,
            fp32_per_pe: self.fp32_per_pe,
            frequency_mhz: self.frequency_hz / MHZ,
            bandwidth_g: self.offchip_bandwidth_bytes_per_s / GIGA,
            onchip_bandwidth_factor: self.onchip_bandwidth_factor,
            movement_efficiency: self.movement_efficiency,
            const_overhead_us: self.const_overhead_s / MICRO,
            fma_dual_issue: self.fma_dual_issue,
        };
        toml::to_string(&file).expect("device spec serializes")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frequency", self.frequency_hz),
            ("bandwidth", self.offchip_bandwidth_bytes_per_s),
            ("onchip_bandwidth_factor", self.onchip_bandwidth_factor),
            ("movement_efficiency", self.movement_efficiency),
        ];
        for (what, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{what} must be positive, got {v}")));
            }
        }
        if self.pe_count == 0 || self.fp32_per_pe == 0 {
            return Err(Error::invalid("pe_count and fp32_per_pe must be positive"));
        }
        if self.movement_efficiency > 1.0 {
            return Err(Error::invalid("movement_efficiency must be in (0, 1]"));
        }
        if !(self.const_overhead_s.is_finite() && self.const_overhead_s >= 0.0) {
            return Err(Error::invalid("const_overhead must be nonnegative"));
        }
        Ok(())
    }

    /// MACs one processing engine retires per second.
    pub fn pe_mac_rate(&self) -> f64 {
        let per_cycle = if self.fma_dual_issue { 2.0 } else { 1.0 };
        self.fp32_per_pe as f64 * self.frequency_hz * per_cycle
    }

    /// Bandwidth between on-chip global memory and PE-local memory.
    pub fn onchip_bandwidth(&self) -> f64 {
        self.offchip_bandwidth_bytes_per_s * self.onchip_bandwidth_factor * self.movement_efficiency
    }

    /// Batch size used when none is given: server and desktop parts are
    /// measured at 128, embedded parts at 1.
    pub fn default_batch(&self) -> usize {
        if self.pe_count <= 2 {
            1
        } else {
            128
        }
    }
}

/// Resolves a preset name or a path to a device spec file.
pub fn load_hardware(name_or_path: &str) -> Result<HardwareSpec> {
    match HardwareSpec::preset(name_or_path) {
        Ok(hw) => Ok(hw),
        Err(unknown) => {
            let path = Path::new(name_or_path);
            if path.is_file() {
                HardwareSpec::from_file(path)
            } else {
                Err(unknown)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_presets() {
        let v100 = HardwareSpec::preset("V100").unwrap();
        assert_eq!(v100.pe_count, 80);
        assert_eq!(v100.fp32_per_pe, 64);
        assert_eq!(v100.frequency_hz, 1.5e9);
        assert_eq!(v100.offchip_bandwidth_bytes_per_s, 700e9);

        let nano = HardwareSpec::preset("nano").unwrap();
        assert_eq!((nano.pe_count, nano.fp32_per_pe), (1, 128));
        assert_eq!(nano.frequency_hz, 921e6);
        assert_eq!(nano.offchip_bandwidth_bytes_per_s, 25.6e9);

        let tx2 = HardwareSpec::preset("TX2").unwrap();
        assert_eq!((tx2.pe_count, tx2.fp32_per_pe), (2, 128));
        assert_eq!(tx2.frequency_hz, 1300e6);
        assert_eq!(tx2.offchip_bandwidth_bytes_per_s, 59.7e9);

        let a = HardwareSpec::preset("RTX3090").unwrap();
        assert_eq!((a.pe_count, a.fp32_per_pe, a.frequency_hz), (82, 128, 1695e6));
        let b = HardwareSpec::preset("RTX3060").unwrap();
        assert_eq!((b.pe_count, b.fp32_per_pe, b.frequency_hz), (28, 128, 1777e6));
        assert_eq!(b.offchip_bandwidth_bytes_per_s, 360e9);
    }

    #[test]
    fn defaults_applied() {
        let v100 = HardwareSpec::preset("V100").unwrap();
        assert_eq!(v100.onchip_bandwidth_factor, 10.0);
        assert_eq!(v100.movement_efficiency, 1.0);
        assert_eq!(v100.const_overhead_s, 0.0);
        assert!(!v100.fma_dual_issue);
    }

    #[test]
    fn presets_round_trip_bit_exact() {
        for name in preset_names() {
            let hw = HardwareSpec::preset(name).unwrap();
            let back = HardwareSpec::from_toml_str(&hw.to_toml_string()).unwrap();
            assert_eq!(hw, back, "{name}");
            assert_eq!(hw.frequency_hz.to_bits(), back.frequency_hz.to_bits());
            assert_eq!(
                hw.offchip_bandwidth_bytes_per_s.to_bits(),
                back.offchip_bandwidth_bytes_per_s.to_bits()
            );
        }
    }

    #[test]
    fn unknown_device() {
        assert!(matches!(load_hardware("A100"), Err(Error::UnknownDevice(_))));
    }

    #[test]
    fn rejects_bad_records() {
        let bad = "name='x'\npe_count=0\nfp32_per_pe=1\nfrequency_mhz=1.0\nbandwidth_g=1.0\n";
        assert!(HardwareSpec::from_toml_str(bad).is_err());
        let bad = "name='x'\npe_count=1\nfp32_per_pe=1\nfrequency_mhz=1.0\nbandwidth_g=1.0\nmovement_efficiency=1.5\n";
        assert!(HardwareSpec::from_toml_str(bad).is_err());
        let typo = "name='x'\npe_count=1\nfp32_per_pe=1\nfrequency_mhz=1.0\nbandwith_g=1.0\n";
        assert!(HardwareSpec::from_toml_str(typo).is_err());
    }

    #[test]
    fn custom_file_loads() {
        let dir = std::env::temp_dir().join(format!("dynlat-hw-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dev.toml");
        std::fs::write(
            &path,
            "name='edge'\npe_count=4\nfp32_per_pe=32\nfrequency_mhz=1000.0\nbandwidth_g=50.0\nconst_overhead_us=3.5\n",
        )
        .unwrap();
        let hw = load_hardware(path.to_str().unwrap()).unwrap();
        assert_eq!(hw.pe_count, 4);
        assert!((hw.const_overhead_s - 3.5e-6).abs() < 1e-18);
        std::fs::remove_dir_all(dir).ok();
    }
}
