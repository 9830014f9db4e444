//! Latency-aware analysis of dynamic convolutional networks.
//!
//! The crate models residual bottleneck blocks that skip work at run time
//! (spatial patches, channel groups or whole layers), counts their MACs,
//! predicts their latency on a parameterized accelerator, runs them in a
//! reference executor and provides the training objectives used to learn
//! the masks.

pub mod cli;
pub mod error;
pub mod executor;
pub mod flops;
pub mod hardware;
pub mod latency;
pub mod model;
pub mod objectives;
pub mod zoo;

pub use error::{Error, Result};
pub use hardware::{load_hardware, HardwareSpec};
pub use model::{
    enumerate_granularities, validate_config, ActivationProfile, BlockSpec, ConvLayerSpec,
    DynamicConfig, Paradigm, TensorShape,
};
pub use zoo::{build_network, NetworkSpec};
