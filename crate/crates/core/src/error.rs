use std::path::PathBuf;

use thiserror::Error;

use crate::signal::Channel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("non-positive DC level {dc}")]
    NonPositiveDc { dc: f64 },
    #[error("no spectrum grid points inside {low_hz}..{high_hz} Hz")]
    EmptyBand { low_hz: f64, high_hz: f64 },
    #[error("unstable filter design: {0}")]
    UnstableDesign(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("segment of {needed} samples exceeds signal length {got}")]
    SegmentTooLong { needed: usize, got: usize },
    #[error("signal too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("channel {0} not present in window")]
    ChannelMissing(Channel),
    #[error("channel {channel} effective rate {effective_hz:.2} Hz is below the {gate_hz} Hz gate")]
    BelowRateGate {
        channel: Channel,
        effective_hz: f64,
        gate_hz: f64,
    },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid preprocessing plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", file.display())]
    Format {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{subjects} subjects cannot fill {k} folds")]
    TooFewSubjects { subjects: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("normal equations are singular (ridge penalty {lambda})")]
    SingularSystem { lambda: f64 },
    #[error("calibration fit is degenerate: all ratios equal")]
    DegenerateFit,
    #[error("feature schema mismatch: model {expected}, input {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("need at least {needed} training pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no pairs to evaluate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    SpecInvalid(String),
}
