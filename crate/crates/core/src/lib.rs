//! Vital-sign estimation toolkit for ring-worn PPG and accelerometer
//! recordings.
//!
//! The crate covers the whole path from recordings to metrics:
//!
//! - [`signal`]: shared domain types and unit conventions
//! - [`ingest`]: session files, windowing, label pairing and subject folds
//! - [`preprocess`]: standardization, band-pass, DiffNorm and Welch spectra
//! - [`estimators`]: peak counting, spectral peak picking and ratio-of-ratios SpO2
//! - [`learner`]: ridge regression on spectral features and SpO2 calibration fits
//! - [`synth`]: seeded synthetic sessions with known ground truth
//! - [`eval`]: MAE / RMSE / MAPE / Pearson, fold merging and stratification

pub mod error;
pub mod estimators;
pub mod eval;
pub mod ingest;
pub mod learner;
pub mod preprocess;
pub mod signal;
pub mod synth;

pub use error::{EvalError, IngestError, LearnError, SignalError, SynthError};
