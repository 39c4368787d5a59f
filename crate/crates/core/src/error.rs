use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::OpCode;

pub type Result<T, E = NfgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NfgError {
    #[error("numeric domain violation in `{op}` at value {value}")]
    NumericDomain { op: OpCode, value: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("cumulative incidence saturated for risk {risk} (F = {cif})")]
    Saturated { risk: usize, cif: f64 },

    #[error("checkpoint parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("schema mismatch: model expects {expected} features, data has {got}")]
    Schema { expected: usize, got: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("censoring calibration failed after {steps} bisection steps (reached {achieved}, target {target})")]
    Calibration {
        steps: usize,
        achieved: f64,
        target: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl NfgError {
    /// Short machine-readable tag used by the command line error record.
    pub fn kind(&self) -> &'static str {
        match self {
            NfgError::NumericDomain { .. } => "numeric_domain",
            NfgError::Usage(_) => "usage",
            NfgError::Shape { .. } => "shape",
            NfgError::NegativeTime(_) => "negative_time",
            NfgError::Saturated { .. } => "saturated",
            NfgError::Parse { .. } => "parse",
            NfgError::UnsupportedVersion(_) => "unsupported_version",
            NfgError::Schema { .. } => "schema",
            NfgError::Data(_) => "data",
            NfgError::NonFiniteLoss { .. } => "non_finite_loss",
            NfgError::Calibration { .. } => "calibration",
            NfgError::Io { .. } => "io",
            NfgError::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NfgError::Io {
            path: path.into(),
            source,
        }
    }
}
