//! Experiment configuration.

use std::path::{Path, PathBuf};

use ringkit_core::estimators::{RateBand, SpO2Calibration};
use ringkit_core::eval::{MergeMode, StratifyBy};
use ringkit_core::learner::{default_feature_plan, DEFAULT_LAMBDA_GRID};
use ringkit_core::preprocess::{PreprocessPlan, SpectralParams};
use ringkit_core::signal::{Channel, RingType, VitalKind, DEFAULT_RATE_GATE_HZ, DEFAULT_RATE_HZ, DEFAULT_WINDOW_S};
use ringkit_core::synth::{CohortSpec, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Peak,
    Fft,
    Ratio,
    Ridge,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Peak => "peak",
            Method::Fft => "fft",
            Method::Ratio => "ratio",
            Method::Ridge => "ridge",
        }
    }

    pub fn supports(self, task: VitalKind) -> bool {
        match self {
            Method::Peak | Method::Fft => matches!(task, VitalKind::Hr | VitalKind::Rr),
            Method::Ratio => task == VitalKind::Spo2,
            Method::Ridge => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    /// Directory whose subdirectories are session directories.
    Root(PathBuf),
    Synth(Vec<SynthSpec>),
    Cohort(CohortSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSettings {
    pub duration_s: f64,
    pub stride_s: f64,
    pub rate_hz: f64,
    pub gate_hz: f64,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            duration_s: DEFAULT_WINDOW_S,
            stride_s: DEFAULT_WINDOW_S,
            rate_hz: DEFAULT_RATE_HZ,
            gate_hz: DEFAULT_RATE_GATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub k: usize,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub lambda_grid: Vec<f64>,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub stratify_by: StratifyBy,
    pub include_out_of_band: bool,
    pub merge_mode: MergeMode,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            stratify_by: StratifyBy::Scenario,
            include_out_of_band: true,
            merge_mode: MergeMode::Pooled,
        }
    }
}

/// SpO2 calibration used by the `ratio` method.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Per-ring defaults.
    #[default]
    Default,
    /// Least-squares fit on each fold's training subjects.
    Fit,
    Fixed(SpO2Calibration),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: Dataset,
    pub task: VitalKind,
    pub method: Method,
    #[serde(default = "default_channels")]
    pub channels: Vec<Channel>,
    #[serde(default)]
    pub ring_type: Option<RingType>,
    #[serde(default)]
    pub window: WindowSettings,
    /// Defaults depend on task and method; see [`ExperimentConfig::plan`].
    #[serde(default)]
    pub preprocess: Option<PreprocessPlan>,
    #[serde(default)]
    pub folds: FoldSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_channels() -> Vec<Channel> {
    vec![Channel::PpgIr]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !self.method.supports(self.task) {
            return bad(format!(
                "method \"{}\" cannot estimate task \"{}\"",
                self.method.as_str(),
                self.task
            ));
        }
        if self.channels.is_empty() {
            return bad("channels must not be empty".into());
        }
        if let Some(c) = self.channels.iter().find(|c| !c.is_ring_input()) {
            return bad(format!("channel {c} is a reference channel, not a ring input"));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return bad(format!("channel {c} listed twice"));
            }
        }
        match self.method {
            Method::Peak | Method::Fft if self.primary_channel().is_none() => {
                return bad(format!("method \"{}\" needs a PPG channel", self.method.as_str()));
            }
            Method::Ratio => {
                if !(self.channels.contains(&Channel::PpgIr) && self.channels.contains(&Channel::PpgRed)) {
                    return bad("method \"ratio\" needs ppg_ir and ppg_red".into());
                }
                if self.preprocess.is_some() {
                    return bad("method \"ratio\" works on raw samples; remove preprocess".into());
                }
            }
            _ => {}
        }
        if let Some(plan) = &self.preprocess {
            match self.method {
                Method::Peak if plan.ends_with_spectral() => {
                    return bad("method \"peak\" needs a time-domain plan (no spectral step)".into());
                }
                Method::Fft if !plan.ends_with_spectral() => {
                    return bad("method \"fft\" needs a plan ending with a spectral step".into());
                }
                _ => {}
            }
        }
        if self.calibration != Calibration::Default && self.method != Method::Ratio {
            return bad("calibration applies only to method \"ratio\"".into());
        }
        if let Calibration::Fixed(c) = self.calibration {
            if !c.is_valid() {
                return bad(format!("calibration intercept {} outside [80, 110]", c.a));
            }
        }
        let w = &self.window;
        if !(w.duration_s >= 10.0 && w.stride_s > 0.0 && w.rate_hz > 0.0 && w.gate_hz >= 0.0) {
            return bad("window needs duration_s >= 10, positive stride_s and rate_hz".into());
        }
        if self.folds.k == 0 {
            return bad("folds.k must be at least 1".into());
        }
        if self.method == Method::Ridge && self.folds.k < 2 {
            return bad("method \"ridge\" needs folds.k >= 2".into());
        }
        if self.training.lambda_grid.is_empty() || self.training.lambda_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return bad("training.lambda_grid needs at least one non-negative value".into());
        }
        Ok(())
    }

    /// Channel the rate estimators run on: the first PPG channel listed.
    pub fn primary_channel(&self) -> Option<Channel> {
        self.channels.iter().copied().find(|c| c.is_ppg())
    }

    /// Configured plan, or the default for this task and method.
    pub fn plan(&self) -> PreprocessPlan {
        if let Some(p) = &self.preprocess {
            return p.clone();
        }
        let band = RateBand::for_kind(self.task);
        match (self.method, band) {
            (Method::Peak, Some(b)) => PreprocessPlan::filtered(b.filter),
            (Method::Fft, Some(b)) => PreprocessPlan::spectral(b.filter, SpectralParams::default()),
            _ => default_feature_plan(),
        }
    }

    /// Canonical JSON used for hashing and for the copy written with each run.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
