//! End-to-end experiment execution.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, info, warn};
use rayon::prelude::*;
use ringkit_core::estimators::{
    detect_peaks, rate_from_peaks, rate_from_spectrum, spo2_estimate, spo2_ratio, RateBand, SpO2Calibration,
};
use ringkit_core::eval::{build_report, pairs_csv, report_csv, report_json, EvalPair};
use ringkit_core::ingest::{
    load_session_with, make_folds, pair_labels, window_session, write_session, FoldPlan, LabeledPair,
    LoadOptions, LoadReport, SessionRecord, WindowConfig,
};
use ringkit_core::learner::{featurize, fit_spo2_calibration, train_with_selection, Dataset, FeatureSchema};
use ringkit_core::preprocess::{run_plan, PreprocessPlan};
use ringkit_core::signal::{Channel, Estimate, RingType, SignalWindow, VitalKind};
use ringkit_core::synth::{generate, SynthSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Calibration, Dataset as DatasetSource, ExperimentConfig, Method};
use crate::RunError;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PAIRS_CSV: &str = "pairs.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONFIG_JSON: &str = "config.json";
pub const MODELS_DIR: &str = "models";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SampleCounts {
    pub input: usize,
    pub used: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WindowCounts {
    /// Window positions inside activity segments.
    pub input: usize,
    /// Windows with an estimate in `pairs.csv`.
    pub used: usize,
    pub dropped_rate_gate: usize,
    pub dropped_bad_data: usize,
    pub dropped_no_reference: usize,
    pub dropped_estimate_failed: usize,
    /// Estimates flagged out of band; included in `used`.
    pub out_of_band: usize,
    /// Out-of-band estimates left out of metrics.
    pub excluded_from_metrics: usize,
}

impl WindowCounts {
    pub fn dropped(&self) -> usize {
        self.dropped_rate_gate + self.dropped_bad_data + self.dropped_no_reference + self.dropped_estimate_failed
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub task: VitalKind,
    pub method: &'static str,
    pub sessions: usize,
    pub subjects: usize,
    pub sessions_skipped_ring_type: usize,
    pub samples: SampleCounts,
    pub labels: SampleCounts,
    pub windows: WindowCounts,
    pub folds: BTreeMap<String, Vec<usize>>,
    pub files: Vec<String>,
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub pairs: Vec<EvalPair>,
    pub report: Vec<ringkit_core::eval::MetricReport>,
    pub manifest: Manifest,
    pub models: Vec<ModelFile>,
}

struct Loaded {
    record: SessionRecord,
    report: LoadReport,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Session specs for a synthetic dataset, in generation order.
pub fn synth_specs(source: &DatasetSource) -> Option<Vec<SynthSpec>> {
    match source {
        DatasetSource::Synth(specs) => Some(specs.clone()),
        DatasetSource::Cohort(c) => Some(c.sessions()),
        DatasetSource::Root(_) => None,
    }
}

fn session_dirs(root: &Path) -> Result<Vec<PathBuf>, RunError> {
    let entries = fs::read_dir(root).map_err(|e| RunError::Data(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(ringkit_core::ingest::SESSION_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(RunError::Data(format!("{}: no session directories found", root.display())));
    }
    Ok(dirs)
}

fn load_dataset(source: &DatasetSource) -> Result<Vec<Loaded>, RunError> {
    match source {
        DatasetSource::Root(root) => {
            let opts = LoadOptions::default();
            session_dirs(root)?
                .par_iter()
                .map(|d| {
                    load_session_with(d, &opts)
                        .map(|l| Loaded { record: l.record, report: l.report })
                        .map_err(|e| RunError::Data(e.to_string()))
                })
                .collect()
        }
        other => {
            let specs = synth_specs(other).expect("synthetic source");
            specs
                .par_iter()
                .map(|s| {
                    let record = generate(s).map_err(|e| RunError::Config(format!("{}: {e}", s.session_id)))?;
                    let report = LoadReport {
                        samples_total: record.signals.iter().map(|s| s.len()).sum(),
                        samples_dropped: 0,
                        labels_total: record.labels.len(),
                        labels_dropped: 0,
                    };
                    Ok(Loaded { record, report })
                })
                .collect()
        }
    }
}

/// Channels each window must carry for this method.
fn window_channels(cfg: &ExperimentConfig) -> Vec<Channel> {
    match cfg.method {
        Method::Peak | Method::Fft => cfg.primary_channel().into_iter().collect(),
        Method::Ratio => vec![Channel::PpgIr, Channel::PpgRed],
        Method::Ridge => cfg.channels.clone(),
    }
}

/// Subject folds per ring type. With fewer subjects than folds every subject
/// lands in fold 0, which only matters for the training-free methods.
fn fold_plans(
    cfg: &ExperimentConfig,
    pairs: &[LabeledPair],
) -> Result<BTreeMap<RingType, Option<FoldPlan>>, RunError> {
    let mut subjects: BTreeMap<RingType, Vec<&str>> = BTreeMap::new();
    for p in pairs {
        subjects.entry(p.ring_type).or_default().push(&p.subject_id);
    }
    let needs_folds = cfg.method == Method::Ridge || cfg.calibration == Calibration::Fit;
    subjects
        .into_iter()
        .map(|(ring, subs)| match make_folds(&subs, cfg.folds.k, cfg.seed) {
            Ok(plan) => Ok((ring, Some(plan))),
            Err(e) if needs_folds => Err(RunError::Data(format!("{ring}: {e}"))),
            Err(_) => Ok((ring, None)),
        })
        .collect()
}

fn eval_pair(p: &LabeledPair, cfg: &ExperimentConfig, fold: usize, estimate: f64, out_of_band: bool) -> EvalPair {
    EvalPair {
        task: cfg.task,
        method: cfg.method.as_str().to_string(),
        ring_type: p.ring_type,
        subject_id: p.subject_id.clone(),
        session_id: p.window.session_id().to_string(),
        start_ms: p.window.start_ms(),
        activity: p.window.activity(),
        scenario: p.scenario,
        fold,
        reference: p.reference,
        estimate,
        out_of_band,
    }
}

fn estimate_rate(w: &SignalWindow, cfg: &ExperimentConfig, plan: &PreprocessPlan) -> Result<(f64, bool), String> {
    let band = RateBand::for_kind(cfg.task).expect("rate task");
    let ch = cfg.primary_channel().expect("validated");
    let processed = run_plan(w, ch, plan).map_err(|e| e.to_string())?;
    let rate = match cfg.method {
        Method::Peak => {
            let x = processed.into_samples().expect("time-domain plan");
            let peaks = detect_peaks(&x, w.rate_hz(), &band).map_err(|e| e.to_string())?;
            rate_from_peaks(peaks.len(), x.len() as f64 / w.rate_hz(), &band)
        }
        _ => {
            let spec = processed.into_spectrum().expect("spectral plan");
            rate_from_spectrum(&spec, &band).map_err(|e| e.to_string())?
        }
    };
    Ok((rate.per_min, rate.out_of_band))
}

fn ratio_of(w: &SignalWindow) -> Result<f64, String> {
    let ir = w.require(Channel::PpgIr).map_err(|e| e.to_string())?;
    let red = w.require(Channel::PpgRed).map_err(|e| e.to_string())?;
    spo2_ratio(ir, red, w.rate_hz()).map_err(|e| e.to_string())
}

type Outcome = Result<EvalPair, String>;

/// File name and JSON body of a trained model.
type ModelFile = (String, String);

/// Indexed test outcomes and the model for one (ring, fold) job.
type FoldResult = Result<(Vec<(usize, Outcome)>, ModelFile), RunError>;

fn fold_index(plans: &BTreeMap<RingType, Option<FoldPlan>>, p: &LabeledPair) -> usize {
    plans
        .get(&p.ring_type)
        .and_then(|f| f.as_ref())
        .and_then(|f| f.fold_of(&p.subject_id))
        .unwrap_or(0)
}

fn run_training_free(
    cfg: &ExperimentConfig,
    pairs: &[LabeledPair],
    plans: &BTreeMap<RingType, Option<FoldPlan>>,
) -> Vec<Outcome> {
    let plan = cfg.plan();
    match (cfg.method, cfg.calibration) {
        (Method::Ratio, Calibration::Fit) => run_fitted_ratio(cfg, pairs, plans),
        (Method::Ratio, cal) => pairs
            .par_iter()
            .map(|p| {
                let cal = match cal {
                    Calibration::Fixed(c) => c,
                    _ => SpO2Calibration::for_ring(p.ring_type),
                };
                let r = ratio_of(&p.window)?;
                let s = spo2_estimate(r, &cal);
                Ok(eval_pair(p, cfg, fold_index(plans, p), s.percent, s.out_of_band))
            })
            .collect(),
        _ => pairs
            .par_iter()
            .map(|p| {
                let (v, oob) = estimate_rate(&p.window, cfg, &plan)?;
                Ok(eval_pair(p, cfg, fold_index(plans, p), v, oob))
            })
            .collect(),
    }
}

/// Ratio method with (a, b) fitted on each fold's training subjects.
fn run_fitted_ratio(
    cfg: &ExperimentConfig,
    pairs: &[LabeledPair],
    plans: &BTreeMap<RingType, Option<FoldPlan>>,
) -> Vec<Outcome> {
    let ratios: Vec<Result<f64, String>> = pairs.par_iter().map(|p| ratio_of(&p.window)).collect();
    let mut out: Vec<Option<Outcome>> = vec![None; pairs.len()];
    for (ring, plan) in plans {
        let plan = plan.as_ref().expect("folds exist when fitting");
        for fold in 0..plan.k {
            let split = plan.split(fold);
            let points: Vec<(f64, f64)> = pairs
                .iter()
                .zip(&ratios)
                .filter(|(p, _)| p.ring_type == *ring && split.train.contains(&p.subject_id))
                .filter_map(|(p, r)| r.as_ref().ok().map(|r| (*r, p.reference)))
                .collect();
            let cal = fit_spo2_calibration(&points);
            for (i, p) in pairs.iter().enumerate() {
                if p.ring_type != *ring || !split.test.contains(&p.subject_id) {
                    continue;
                }
                out[i] = Some(match (&ratios[i], &cal) {
                    (Err(e), _) => Err(e.clone()),
                    (_, Err(e)) => Err(format!("calibration fit for fold {fold}: {e}")),
                    (Ok(r), Ok(c)) => {
                        let s = spo2_estimate(*r, c);
                        Ok(eval_pair(p, cfg, fold, s.percent, s.out_of_band))
                    }
                });
            }
        }
    }
    out.into_iter()
        .map(|o| o.unwrap_or_else(|| Err("subject missing from fold plan".into())))
        .collect()
}

fn run_ridge(
    cfg: &ExperimentConfig,
    pairs: &[LabeledPair],
    plans: &BTreeMap<RingType, Option<FoldPlan>>,
) -> Result<(Vec<Outcome>, Vec<ModelFile>), RunError> {
    let plan = cfg.plan();
    let schema = Arc::new(FeatureSchema::for_channels(&cfg.channels));
    let features: Vec<Result<Vec<f64>, String>> = pairs
        .par_iter()
        .map(|p| {
            featurize(&p.window, &cfg.channels, &plan)
                .map(|f| f.values)
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut jobs = Vec::new();
    for (ring, fp) in plans {
        let fp = fp.as_ref().expect("folds exist for ridge");
        for fold in 0..fp.k {
            jobs.push((*ring, fold, fp.split(fold)));
        }
    }
    let build = |ring: RingType, subjects: &std::collections::BTreeSet<String>| -> (Dataset, Vec<usize>) {
        let mut d = Dataset::new(cfg.task, schema.clone());
        let mut idx = Vec::new();
        for (i, (p, f)) in pairs.iter().zip(&features).enumerate() {
            if let (true, Ok(f)) = (p.ring_type == ring && subjects.contains(&p.subject_id), f) {
                d.push(f.clone(), p.reference);
                idx.push(i);
            }
        }
        (d, idx)
    };
    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|(ring, fold, split)| {
            let (train, _) = build(*ring, &split.train);
            let (validation, _) = build(*ring, &split.validation);
            let (test, test_idx) = build(*ring, &split.test);
            let (model, scores) = train_with_selection(&train, Some(&validation), &cfg.training.lambda_grid)
                .map_err(|e| RunError::Data(format!("{ring} fold {fold}: {e}")))?;
            debug!("{ring} fold {fold}: lambda {} from {scores:?}", model.lambda);
            let outcomes = test_idx
                .iter()
                .zip(&test.x)
                .map(|(&i, x)| {
                    let y = model.predict_row(x);
                    let flagged = Estimate::new(cfg.task, y, pairs[i].window.window_ref(), "ridge").out_of_band;
                    (i, Ok(eval_pair(&pairs[i], cfg, *fold, y, flagged)))
                })
                .collect();
            Ok((outcomes, (format!("{ring}_fold{fold}.json"), model.to_json())))
        })
        .collect();

    let mut out: Vec<Option<Outcome>> = vec![None; pairs.len()];
    let mut models = Vec::new();
    for r in results {
        let (outcomes, model) = r?;
        for (i, o) in outcomes {
            out[i] = Some(o);
        }
        models.push(model);
    }
    let outcomes = out
        .into_iter()
        .zip(features)
        .map(|(o, f)| match (o, f) {
            (Some(o), _) => o,
            (None, Err(e)) => Err(e),
            (None, Ok(_)) => Err("subject missing from fold plan".into()),
        })
        .collect();
    Ok((outcomes, models))
}

/// Runs the experiment without touching the filesystem, except to read a
/// dataset root.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let loaded = load_dataset(&cfg.dataset)?;
    let mut samples = SampleCounts::default();
    let mut labels = SampleCounts::default();
    for l in &loaded {
        samples.input += l.report.samples_total;
        samples.dropped += l.report.samples_dropped;
        labels.input += l.report.labels_total;
        labels.dropped += l.report.labels_dropped;
    }
    samples.used = samples.input - samples.dropped;
    labels.used = labels.input - labels.dropped;

    let (kept, skipped): (Vec<_>, Vec<_>) = loaded
        .into_iter()
        .partition(|l| cfg.ring_type.is_none_or(|r| r == l.record.ring_type));
    if kept.is_empty() {
        return Err(RunError::Data("no sessions match the ring_type filter".into()));
    }
    info!("{} sessions loaded, {} skipped by ring type", kept.len(), skipped.len());

    let wcfg = WindowConfig {
        duration_s: cfg.window.duration_s,
        rate_hz: cfg.window.rate_hz,
        stride_s: cfg.window.stride_s,
        gate_hz: cfg.window.gate_hz,
        channels: window_channels(cfg),
    };
    let per_session: Vec<_> = kept
        .par_iter()
        .map(|l| {
            let w = window_session(&l.record, &wcfg);
            let p = pair_labels(&w.windows, &l.record, cfg.task);
            (w, p)
        })
        .collect();
    let mut counts = WindowCounts::default();
    let mut pairs = Vec::new();
    for (w, p) in per_session {
        counts.input += w.candidates;
        counts.dropped_rate_gate += w.gate_dropped;
        counts.dropped_bad_data += w.other_dropped;
        counts.dropped_no_reference += p.missing_reference;
        pairs.extend(p.pairs);
    }

    let plans = fold_plans(cfg, &pairs)?;
    let (outcomes, models) = match cfg.method {
        Method::Ridge => run_ridge(cfg, &pairs, &plans)?,
        _ => (run_training_free(cfg, &pairs, &plans), Vec::new()),
    };
    let mut evaluated = Vec::with_capacity(outcomes.len());
    for (p, o) in pairs.iter().zip(outcomes) {
        match o {
            Ok(e) => evaluated.push(e),
            Err(msg) => {
                debug!("{}@{}: {msg}", p.window.session_id(), p.window.start_ms());
                counts.dropped_estimate_failed += 1;
            }
        }
    }
    counts.used = evaluated.len();
    counts.out_of_band = evaluated.iter().filter(|p| p.out_of_band).count();
    if !cfg.eval.include_out_of_band {
        counts.excluded_from_metrics = counts.out_of_band;
    }
    debug_assert_eq!(counts.input, counts.used + counts.dropped());
    if counts.dropped_estimate_failed > 0 {
        warn!("{} windows failed estimation", counts.dropped_estimate_failed);
    }
    if evaluated.is_empty() {
        return Err(RunError::Data(format!(
            "no windows could be evaluated ({} candidates, {} gated, {} bad data, {} without reference, {} failed)",
            counts.input,
            counts.dropped_rate_gate,
            counts.dropped_bad_data,
            counts.dropped_no_reference,
            counts.dropped_estimate_failed
        )));
    }

    let report = build_report(
        &evaluated,
        cfg.eval.stratify_by,
        cfg.eval.merge_mode,
        cfg.eval.include_out_of_band,
    );
    let mut subjects: Vec<&str> = kept.iter().map(|l| l.record.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let mut files = vec![CONFIG_JSON, MANIFEST_JSON, PAIRS_CSV, REPORT_CSV, REPORT_JSON]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    files.extend(models.iter().map(|(name, _)| format!("{MODELS_DIR}/{name}")));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        seed: cfg.seed,
        task: cfg.task,
        method: cfg.method.as_str(),
        sessions: kept.len(),
        subjects: subjects.len(),
        sessions_skipped_ring_type: skipped.len(),
        samples,
        labels,
        windows: counts,
        folds: plans
            .iter()
            .filter_map(|(r, p)| Some((r.to_string(), p.as_ref()?.fold_sizes())))
            .collect(),
        files,
    };
    Ok(RunOutput {
        pairs: evaluated,
        report,
        manifest,
        models,
    })
}

fn write_file(path: &Path, body: &str) -> Result<(), RunError> {
    fs::write(path, body).map_err(|e| RunError::Output(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Output(format!("{}: {e}", dir.display())))
}

/// Writes a run's artifacts under `out`.
pub fn write_output(cfg: &ExperimentConfig, run: &RunOutput, out: &Path) -> Result<(), RunError> {
    ensure_dir(out)?;
    write_file(&out.join(CONFIG_JSON), &cfg.canonical_json())?;
    write_file(&out.join(PAIRS_CSV), &pairs_csv(&run.pairs))?;
    write_file(&out.join(REPORT_CSV), &report_csv(&run.report))?;
    write_file(&out.join(REPORT_JSON), &report_json(&run.report))?;
    if !run.models.is_empty() {
        let dir = out.join(MODELS_DIR);
        ensure_dir(&dir)?;
        for (name, body) in &run.models {
            write_file(&dir.join(name), &format!("{body}\n"))?;
        }
    }
    let mut manifest = serde_json::to_string_pretty(&run.manifest).expect("manifest serializes");
    manifest.push('\n');
    write_file(&out.join(MANIFEST_JSON), &manifest)
}

/// Runs `cfg` and writes its artifacts to `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput, RunError> {
    let output = execute(cfg)?;
    write_output(cfg, &output, out)?;
    Ok(output)
}

/// Generates and writes each synthetic session to `out/<session_id>/`.
pub fn write_synth(specs: &[SynthSpec], out: &Path) -> Result<Vec<PathBuf>, RunError> {
    ensure_dir(out)?;
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.session_id.as_str())) {
        return Err(RunError::Config(format!("duplicate session_id {}", dup.session_id)));
    }
    specs
        .par_iter()
        .map(|s| {
            let record = generate(s).map_err(|e| RunError::Config(format!("{}: {e}", s.session_id)))?;
            let dir = out.join(&s.session_id);
            write_session(&record, &dir).map_err(|e| RunError::Output(e.to_string()))?;
            Ok(dir)
        })
        .collect()
}

/// Re-seeds a synthetic dataset: a cohort takes `seed` directly, explicit
/// session lists get `seed + index`.
pub fn reseed(source: &mut DatasetSource, seed: u64) {
    match source {
        DatasetSource::Cohort(c) => c.seed = seed,
        DatasetSource::Synth(specs) => {
            for (i, s) in specs.iter_mut().enumerate() {
                s.seed = seed.wrapping_add(i as u64);
            }
        }
        DatasetSource::Root(_) => {}
    }
}
