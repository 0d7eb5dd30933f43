//! Accuracy metrics, fold merging, stratification and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::signal::{ActivityTag, RingType, Scenario, VitalKind};

/// Groups below this size are flagged in reports.
pub const LOW_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    /// Standard error of the absolute errors (sample std / √n); `None` for n = 1.
    pub se_mae: Option<f64>,
    pub rmse: f64,
    /// Percent; `None` when every reference is zero.
    pub mape: Option<f64>,
    /// Pairs left out of MAPE because the reference is zero.
    pub mape_excluded: usize,
    /// `None` for n < 2 or when either side has zero variance.
    pub pearson: Option<f64>,
}

/// MAE, RMSE, MAPE, Pearson r and the standard error of MAE over
/// `(reference, estimate)` pairs.
///
/// Pairs are put in a canonical order before any summation, so the result is
/// a function of the multiset of pairs and does not depend on input order.
pub fn metrics(pairs: &[(f64, f64)]) -> Result<Metrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut p = pairs.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = p.len();
    let nf = n as f64;

    let abs: Vec<f64> = p.iter().map(|(y, e)| (y - e).abs()).collect();
    let mae = abs.iter().sum::<f64>() / nf;
    let rmse = (p.iter().map(|(y, e)| (y - e).powi(2)).sum::<f64>() / nf).sqrt();
    let se_mae = (n > 1).then(|| {
        let var = abs.iter().map(|a| (a - mae).powi(2)).sum::<f64>() / (nf - 1.0);
        var.sqrt() / nf.sqrt()
    });

    let rel: Vec<f64> = p
        .iter()
        .filter(|(y, _)| *y != 0.0)
        .map(|(y, e)| ((y - e) / y).abs())
        .collect();
    let mape_excluded = n - rel.len();
    let mape = (!rel.is_empty()).then(|| 100.0 * rel.iter().sum::<f64>() / rel.len() as f64);

    Ok(Metrics {
        n,
        mae,
        se_mae,
        rmse,
        mape,
        mape_excluded,
        pearson: pearson(&p),
    })
}

fn pearson(p: &[(f64, f64)]) -> Option<f64> {
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let my = p.iter().map(|q| q.0).sum::<f64>() / n;
    let me = p.iter().map(|q| q.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, e) in p {
        sxy += (y - my) * (e - me);
        sxx += (y - my).powi(2);
        syy += (e - me).powi(2);
    }
    let scale = |m: f64| 1e-24 * n * m.abs().max(1.0).powi(2);
    if sxx <= scale(my) || syy <= scale(me) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One evaluated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub task: VitalKind,
    pub method: String,
    pub ring_type: RingType,
    pub subject_id: String,
    pub session_id: String,
    pub start_ms: i64,
    pub activity: ActivityTag,
    pub scenario: Scenario,
    pub fold: usize,
    pub reference: f64,
    pub estimate: f64,
    pub out_of_band: bool,
}

impl EvalPair {
    pub fn as_tuple(&self) -> (f64, f64) {
        (self.reference, self.estimate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Concatenate all test folds, then compute once.
    #[default]
    Pooled,
    /// Unweighted mean of per-fold metrics.
    FoldMean,
}

/// Combines per-fold test pairs into one set of metrics.
pub fn merge_folds(per_fold: &[Vec<(f64, f64)>], mode: MergeMode) -> Result<Metrics, EvalError> {
    match mode {
        MergeMode::Pooled => {
            let all: Vec<(f64, f64)> = per_fold.iter().flatten().copied().collect();
            metrics(&all)
        }
        MergeMode::FoldMean => {
            let folds: Vec<Metrics> = per_fold
                .iter()
                .filter(|f| !f.is_empty())
                .map(|f| metrics(f))
                .collect::<Result<_, _>>()?;
            if folds.is_empty() {
                return Err(EvalError::EmptyInput);
            }
            let k = folds.len() as f64;
            let avg = |get: &dyn Fn(&Metrics) -> Option<f64>| -> Option<f64> {
                let v: Vec<f64> = folds.iter().filter_map(get).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            Ok(Metrics {
                n: folds.iter().map(|m| m.n).sum(),
                mae: folds.iter().map(|m| m.mae).sum::<f64>() / k,
                se_mae: avg(&|m| m.se_mae),
                rmse: folds.iter().map(|m| m.rmse).sum::<f64>() / k,
                mape: avg(&|m| m.mape),
                mape_excluded: folds.iter().map(|m| m.mape_excluded).sum(),
                pearson: avg(&|m| m.pearson),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyBy {
    /// Single group named `all`.
    None,
    #[default]
    Scenario,
    Activity,
}

impl StratifyBy {
    pub fn group_of(self, p: &EvalPair) -> &'static str {
        match self {
            StratifyBy::None => "all",
            StratifyBy::Scenario => p.scenario.as_str(),
            StratifyBy::Activity => p.activity.as_str(),
        }
    }
}

/// Pairs grouped by scenario or activity.
pub fn stratify(pairs: &[EvalPair], by: StratifyBy) -> BTreeMap<&'static str, Vec<&EvalPair>> {
    let mut out: BTreeMap<&'static str, Vec<&EvalPair>> = BTreeMap::new();
    for p in pairs {
        out.entry(by.group_of(p)).or_default().push(p);
    }
    out
}

/// One report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: VitalKind,
    pub method: String,
    pub ring_type: RingType,
    pub scenario: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub low_n: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl MetricReport {
    pub fn new(task: VitalKind, method: &str, ring_type: RingType, scenario: &str, metrics: Metrics) -> Self {
        let note = metrics
            .pearson
            .is_none()
            .then(|| "degenerate_correlation".to_string());
        Self {
            task,
            method: method.to_string(),
            ring_type,
            scenario: scenario.to_string(),
            low_n: metrics.n < LOW_N,
            metrics,
            note,
        }
    }
}

/// Per-(task, method, ring type, group) rows from fold-tagged pairs.
///
/// Each group is merged across folds with `mode`. Out-of-band estimates are
/// dropped first unless `include_out_of_band`.
pub fn build_report(
    pairs: &[EvalPair],
    by: StratifyBy,
    mode: MergeMode,
    include_out_of_band: bool,
) -> Vec<MetricReport> {
    type Key<'a> = (VitalKind, &'a str, RingType, &'static str);
    let mut groups: BTreeMap<Key, BTreeMap<usize, Vec<(f64, f64)>>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| include_out_of_band || !p.out_of_band) {
        for g in [by.group_of(p), "all"] {
            groups
                .entry((p.task, p.method.as_str(), p.ring_type, g))
                .or_default()
                .entry(p.fold)
                .or_default()
                .push(p.as_tuple());
            if by == StratifyBy::None {
                break;
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|((task, method, ring, group), folds)| {
            let folds: Vec<_> = folds.into_values().collect();
            let m = merge_folds(&folds, mode).ok()?;
            Some(MetricReport::new(task, method, ring, group, m))
        })
        .collect()
}

pub const REPORT_HEADER: &str = "task,method,ring_type,scenario,n,mae,se_mae,rmse,mape,pearson";
pub const PAIRS_HEADER: &str =
    "task,method,ring_type,subject_id,session_id,start_ms,activity,scenario,fold,reference,estimate,out_of_band";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

pub fn report_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.metrics;
        writeln!(
            s,
            "{},{},{},{},{},{:.6},{},{:.6},{},{}",
            r.task,
            r.method,
            r.ring_type,
            r.scenario,
            m.n,
            m.mae,
            opt(m.se_mae),
            m.rmse,
            opt(m.mape),
            opt(m.pearson)
        )
        .expect("write to string");
    }
    s
}

pub fn report_json(rows: &[MetricReport]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("report serializes");
    s.push('\n');
    s
}

/// Error-versus-reference scatter data, one row per evaluated window.
pub fn pairs_csv(pairs: &[EvalPair]) -> String {
    let mut s = String::from(PAIRS_HEADER);
    s.push('\n');
    for p in pairs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
            p.task,
            p.method,
            p.ring_type,
            p.subject_id,
            p.session_id,
            p.start_ms,
            p.activity.as_str(),
            p.scenario.as_str(),
            p.fold,
            p.reference,
            p.estimate,
            p.out_of_band
        )
        .expect("write to string");
    }
    s
}

/// Parses [`pairs_csv`] output.
pub fn parse_pairs_csv(text: &str) -> Result<Vec<EvalPair>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PAIRS_HEADER => {}
        _ => return Err("line 1: unexpected header".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let err = |what: &str| format!("line {}: bad {what}", i + 1);
        if f.len() != 12 {
            return Err(err("field count"));
        }
        let ring_type = match f[2] {
            "reflective" => RingType::Reflective,
            "transmissive" => RingType::Transmissive,
            _ => return Err(err("ring_type")),
        };
        let activity: ActivityTag = f[6].parse().map_err(|_| err("activity"))?;
        out.push(EvalPair {
            task: f[0].parse().map_err(|_| err("task"))?,
            method: f[1].to_string(),
            ring_type,
            subject_id: f[3].to_string(),
            session_id: f[4].to_string(),
            start_ms: f[5].parse().map_err(|_| err("start_ms"))?,
            activity,
            scenario: activity.scenario(),
            fold: f[8].parse().map_err(|_| err("fold"))?,
            reference: f[9].parse().map_err(|_| err("reference"))?,
            estimate: f[10].parse().map_err(|_| err("estimate"))?,
            out_of_band: f[11].parse().map_err(|_| err("out_of_band"))?,
        });
    }
    Ok(out)
}
