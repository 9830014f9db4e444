use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A granularity that does not divide the dimension it partitions.
    #[error("granularity {value} does not divide {what} {dim} (valid choices are the divisors of {dim})")]
    GranularityMismatch {
        value: usize,
        dim: usize,
        what: &'static str,
    },

    #[error("paradigm {paradigm} requires field `{field}`")]
    ParadigmFieldMissing {
        paradigm: &'static str,
        field: &'static str,
    },

    #[error("unknown device `{0}` (presets: V100, RTX3090, RTX3060, TX2, Nano; or a device spec file)")]
    UnknownDevice(String),

    #[error("unknown network `{0}` (built-in: resnet50, resnet101, regnety-400mf, regnety-800mf; or an architecture file)")]
    UnknownNetwork(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mask shape mismatch: {0}")]
    MaskShapeMismatch(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("expected {expected} per-block profiles, got {got}")]
    ProfileCountMismatch { expected: usize, got: usize },

    #[error("plan has {got} stages, network has {expected}")]
    PlanLengthMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidValue(msg.into())
    }

    /// True for errors caused by a configuration that fails validation, as
    /// opposed to lookup or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::GranularityMismatch { .. }
                | Error::ParadigmFieldMissing { .. }
                | Error::ShapeMismatch(_)
                | Error::MaskShapeMismatch(_)
                | Error::ProfileCountMismatch { .. }
                | Error::PlanLengthMismatch { .. }
                | Error::LengthMismatch { .. }
                | Error::StepOutOfRange { .. }
                | Error::InvalidValue(_)
                | Error::Unsupported(_)
                | Error::DivisionByZero(_)
        )
    }
}
