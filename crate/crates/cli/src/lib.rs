//! Config-driven experiment runner: synthesize sessions, estimate vital signs
//! per window, train per fold, and write metric reports with a run manifest.

pub mod config;
pub mod runner;

use std::path::Path;

use ringkit_core::eval::{build_report, parse_pairs_csv, report_csv, report_json, MergeMode, StratifyBy};
use serde::Deserialize;

pub use config::ExperimentConfig;
pub use runner::{execute, run, write_output, write_synth, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("output error: {0}")]
    Output(String),
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 for anything
    /// wrong with the data or the files around it.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) | RunError::Output(_) => 3,
        }
    }
}

/// The part of a config the `synth` command reads; any experiment config
/// with a synthetic dataset also qualifies.
#[derive(Debug, Deserialize)]
pub struct SynthConfig {
    pub dataset: config::Dataset,
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}

/// Eval settings that `report` can override.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOverrides {
    pub stratify_by: Option<StratifyBy>,
    pub merge_mode: Option<MergeMode>,
    pub include_out_of_band: Option<bool>,
}

/// Rebuilds `report.csv` and `report.json` from a prior run's pairs.
pub fn rerender(run_dir: &Path, out: &Path, o: ReportOverrides) -> Result<usize, RunError> {
    let cfg = ExperimentConfig::load(&run_dir.join(runner::CONFIG_JSON))?;
    let pairs_path = run_dir.join(runner::PAIRS_CSV);
    let text = std::fs::read_to_string(&pairs_path)
        .map_err(|e| RunError::Data(format!("{}: {e}", pairs_path.display())))?;
    let pairs = parse_pairs_csv(&text).map_err(|e| RunError::Data(format!("{}: {e}", pairs_path.display())))?;
    let rows = build_report(
        &pairs,
        o.stratify_by.unwrap_or(cfg.eval.stratify_by),
        o.merge_mode.unwrap_or(cfg.eval.merge_mode),
        o.include_out_of_band.unwrap_or(cfg.eval.include_out_of_band),
    );
    std::fs::create_dir_all(out).map_err(|e| RunError::Output(format!("{}: {e}", out.display())))?;
    for (name, body) in [(runner::REPORT_CSV, report_csv(&rows)), (runner::REPORT_JSON, report_json(&rows))] {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| RunError::Output(format!("{}: {e}", p.display())))?;
    }
    Ok(rows.len())
}
