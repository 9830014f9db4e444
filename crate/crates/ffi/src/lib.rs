//! C ABI over the dynlat latency and FLOPs models.
//!
//! Objects are opaque handles created by `*_build` / `*_preset` calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DynlatStatus`]; on failure the message is available from
//! [`dynlat_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dynlat::flops::network_flops;
use dynlat::latency::{predict_block, FusionFlags};
use dynlat::zoo::GranularityPlan;
use dynlat::{
    build_network, validate_config, ActivationProfile, DynamicConfig, Error, HardwareSpec, NetworkSpec, Paradigm,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynlatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownDevice = 3,
    UnknownNetwork = 4,
    /// Configuration rejected by validation (granularity, rate, shape).
    Invalid = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynlatParadigm {
    Spatial = 0,
    Channel = 1,
    Layer = 2,
    Static = 3,
}

/// Fuse the spatial masker into the first 1x1 convolution.
pub const DYNLAT_FUSE_MASKER: u32 = 1;
/// Fuse the gather into the 3x3 convolution.
pub const DYNLAT_FUSE_GATHER: u32 = 2;
/// Fuse the scatter into the residual add.
pub const DYNLAT_FUSE_SCATTER: u32 = 4;
pub const DYNLAT_FUSE_ALL: u32 = 7;

/// Latency of one block in microseconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DynlatLatency {
    pub data_us: f64,
    pub compute_us: f64,
    pub const_us: f64,
    pub total_us: f64,
    /// Dynamic over static latency.
    pub r_ell: f64,
}

/// Network MACs, stem and classifier included.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DynlatFlops {
    pub dynamic_macs: f64,
    pub static_macs: f64,
    pub ratio: f64,
}

/// Opaque device description.
pub struct DynlatHardware(HardwareSpec);

/// Opaque network description.
pub struct DynlatNetwork(NetworkSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DynlatStatus {
    match e {
        Error::UnknownDevice(_) => DynlatStatus::UnknownDevice,
        Error::UnknownNetwork(_) => DynlatStatus::UnknownNetwork,
        Error::Parse { .. } => DynlatStatus::Parse,
        Error::Io(_) => DynlatStatus::Io,
        _ => DynlatStatus::Invalid,
    }
}

struct Failure(DynlatStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DynlatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DynlatStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DynlatStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DynlatStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DynlatStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn paradigm(p: DynlatParadigm) -> Paradigm {
    match p {
        DynlatParadigm::Spatial => Paradigm::Spatial,
        DynlatParadigm::Channel => Paradigm::Channel,
        DynlatParadigm::Layer => Paradigm::Layer,
        DynlatParadigm::Static => Paradigm::Static,
    }
}

fn block_config(p: DynlatParadigm, granularity: usize) -> DynamicConfig {
    match p {
        DynlatParadigm::Spatial => DynamicConfig::spatial(granularity),
        DynlatParadigm::Channel => DynamicConfig::channel(granularity),
        DynlatParadigm::Layer => DynamicConfig::layer(),
        DynlatParadigm::Static => DynamicConfig::static_block(),
    }
}

fn fusion(bits: u32) -> Result<FusionFlags, Failure> {
    if bits & !DYNLAT_FUSE_ALL != 0 {
        return Err(Failure(DynlatStatus::Invalid, format!("unknown fusion bits {bits:#x}")));
    }
    Ok(FusionFlags {
        fuse_masker_conv1: bits & DYNLAT_FUSE_MASKER != 0,
        fuse_gather_conv: bits & DYNLAT_FUSE_GATHER != 0,
        fuse_scatter_add: bits & DYNLAT_FUSE_SCATTER != 0,
    })
}

/// Looks up a device preset (V100, RTX3090, RTX3060, TX2, Nano).
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynlat_hardware_preset(name: *const c_char, out: *mut *mut DynlatHardware) -> DynlatStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let hw = HardwareSpec::preset(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(DynlatHardware(hw)));
        Ok(())
    })
}

/// Loads a device description file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynlat_hardware_from_file(path: *const c_char, out: *mut *mut DynlatHardware) -> DynlatStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let hw = HardwareSpec::from_file(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DynlatHardware(hw)));
        Ok(())
    })
}

/// # Safety
/// `hw` must come from a `dynlat_hardware_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn dynlat_hardware_free(hw: *mut DynlatHardware) {
    if !hw.is_null() {
        drop(Box::from_raw(hw));
    }
}

/// Builds a shipped network by name or loads an architecture file.
///
/// # Safety
/// `name_or_path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynlat_network_build(
    name_or_path: *const c_char,
    out: *mut *mut DynlatNetwork,
) -> DynlatStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let net = build_network(str_arg(name_or_path, "name_or_path")?)?;
        *out = Box::into_raw(Box::new(DynlatNetwork(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must come from `dynlat_network_build`, or be null.
#[no_mangle]
pub unsafe extern "C" fn dynlat_network_free(net: *mut DynlatNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of residual blocks, or 0 for a null handle.
///
/// # Safety
/// `net` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dynlat_network_block_count(net: *const DynlatNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.block_count())
}

/// Predicts one block. `stage` is 1-based, `index` 0-based within the
/// stage. `granularity` is S or G and is ignored for the layer and static
/// paradigms. `batch` of 0 picks the device default.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dynlat_predict_block(
    hw: *const DynlatHardware,
    net: *const DynlatNetwork,
    stage: usize,
    index: usize,
    paradigm: DynlatParadigm,
    granularity: usize,
    rate: f64,
    batch: usize,
    fuse: u32,
    out: *mut DynlatLatency,
) -> DynlatStatus {
    guard(|| {
        let hw = &hw.as_ref().ok_or_else(|| null("hw"))?.0;
        let net = &net.as_ref().ok_or_else(|| null("net"))?.0;
        let out = out_arg(out, "out")?;
        let flags = fusion(fuse)?;
        let b = net.block(stage, index)?.spec;
        let cfg = validate_config(&b, &block_config(paradigm, granularity))?;
        let prof = ActivationProfile::from_rate(&b, &cfg, rate)?;
        let batch = if batch == 0 { hw.default_batch() } else { batch };
        let p = predict_block(&b, &cfg, &prof, flags, hw, batch)?;
        *out = DynlatLatency {
            data_us: p.breakdown.data_s * 1e6,
            compute_us: p.breakdown.compute_s * 1e6,
            const_us: p.breakdown.const_s * 1e6,
            total_us: p.breakdown.total_s * 1e6,
            r_ell: p.r_ell,
        };
        Ok(())
    })
}

/// Network MACs with one granularity for every stage and one activation
/// rate for every block.
///
/// # Safety
/// `net` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynlat_network_flops(
    net: *const DynlatNetwork,
    paradigm: DynlatParadigm,
    granularity: usize,
    rate: f64,
    out: *mut DynlatFlops,
) -> DynlatStatus {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.0;
        let out = out_arg(out, "out")?;
        let plan = GranularityPlan::uniform(granularity, net.stages.len());
        let configs = net.block_configs(self::paradigm(paradigm), Some(&plan))?;
        let profiles = net
            .blocks()?
            .iter()
            .zip(&configs)
            .map(|(b, c)| ActivationProfile::from_rate(&b.spec, c, rate))
            .collect::<dynlat::Result<Vec<_>>>()?;
        let rep = network_flops(net, &configs, &profiles)?;
        *out = DynlatFlops {
            dynamic_macs: rep.f_dyn,
            static_macs: rep.f_stat as f64,
            ratio: rep.ratio,
        };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dynlat_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dynlat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
