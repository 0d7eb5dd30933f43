//! On-disk session layout: `session.json`, `signals.csv`, `labels.csv`.
//!
//! CSV bodies are UTF-8 with LF line endings and a fixed header. Rows are
//! written sorted by timestamp, then by channel (or label kind) order, with
//! values in shortest round-trip decimal form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ActivitySegment, LabelSample, SessionRecord};
use crate::error::IngestError;
use crate::signal::{ActivityTag, Channel, RingType, TimeSeries, VitalKind};

pub const SESSION_FILE: &str = "session.json";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const LABELS_FILE: &str = "labels.csv";
const SIGNALS_HEADER: &str = "t_ms,channel,value";
const LABELS_HEADER: &str = "t_ms,kind,value";

#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    session_id: String,
    subject_id: String,
    ring_type: RingType,
    activities: Vec<ActivityMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ActivityMeta {
    tag: ActivityTag,
    start_ms: i64,
    end_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Largest tolerated fraction of dropped signal samples or labels.
    pub tolerance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { tolerance: 0.01 }
    }
}

/// Counts of what was dropped while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub samples_total: usize,
    pub samples_dropped: usize,
    pub labels_total: usize,
    pub labels_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSession {
    pub record: SessionRecord,
    pub report: LoadReport,
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(file: &Path, line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Format {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Splits a CSV body into `(line_number, fields)` rows after checking the
/// header.
fn rows<'a>(
    path: &'a Path,
    text: &'a str,
    header: &'static str,
) -> Result<impl Iterator<Item = (usize, Result<[&'a str; 3], IngestError>)> + 'a, IngestError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => return Err(format_err(path, 1, format!("expected header `{header}`"))),
    }
    Ok(lines
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .map(move |(no, l)| {
            let mut it = l.split(',');
            let fields = match (it.next(), it.next(), it.next(), it.next()) {
                (Some(a), Some(b), Some(c), None) => Ok([a, b, c]),
                _ => Err(format_err(path, no, "expected 3 comma-separated fields")),
            };
            (no, fields)
        }))
}

fn parse_t(path: &Path, line: usize, s: &str) -> Result<i64, IngestError> {
    s.parse()
        .map_err(|_| format_err(path, line, format!("bad timestamp `{s}`")))
}

fn parse_value(path: &Path, line: usize, s: &str) -> Result<f64, IngestError> {
    s.parse()
        .map_err(|_| format_err(path, line, format!("bad value `{s}`")))
}

pub fn load_session(dir: &Path) -> Result<LoadedSession, IngestError> {
    load_session_with(dir, &LoadOptions::default())
}

pub fn load_session_with(dir: &Path, opts: &LoadOptions) -> Result<LoadedSession, IngestError> {
    let meta_path = dir.join(SESSION_FILE);
    let meta: SessionMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| format_err(&meta_path, e.line(), e.to_string()))?;
    let mut activities: Vec<ActivitySegment> = meta
        .activities
        .iter()
        .map(|a| ActivitySegment {
            tag: a.tag,
            start_ms: a.start_ms,
            end_ms: a.end_ms,
        })
        .collect();
    activities.sort_by_key(|a| a.start_ms);

    let mut report = LoadReport::default();
    let signals = load_signals(&dir.join(SIGNALS_FILE), &mut report)?;

    let mut record = SessionRecord {
        session_id: meta.session_id,
        subject_id: meta.subject_id,
        ring_type: meta.ring_type,
        signals,
        activities,
        labels: Vec::new(),
    };
    let span = record.span();
    record.labels = load_labels(&dir.join(LABELS_FILE), span, &mut report)?;

    let structural: Vec<_> = record
        .violations()
        .into_iter()
        .filter(|v| {
            matches!(
                v,
                super::SessionViolation::OverlappingActivities { .. } | super::SessionViolation::EmptyActivity { .. }
            )
        })
        .collect();
    if !structural.is_empty() {
        return Err(IngestError::Validation(format!(
            "session {}: activity intervals invalid: {structural:?}",
            record.session_id
        )));
    }
    let frac = |dropped: usize, total: usize| if total == 0 { 0.0 } else { dropped as f64 / total as f64 };
    if frac(report.samples_dropped, report.samples_total) > opts.tolerance {
        return Err(IngestError::Validation(format!(
            "session {}: {} of {} signal samples non-finite",
            record.session_id, report.samples_dropped, report.samples_total
        )));
    }
    if frac(report.labels_dropped, report.labels_total) > opts.tolerance {
        return Err(IngestError::Validation(format!(
            "session {}: {} of {} labels implausible or outside the session",
            record.session_id, report.labels_dropped, report.labels_total
        )));
    }
    if report.labels_dropped > 0 {
        warn!("session {}: dropped {} labels", record.session_id, report.labels_dropped);
    }
    Ok(LoadedSession { record, report })
}

fn load_signals(path: &Path, report: &mut LoadReport) -> Result<Vec<TimeSeries>, IngestError> {
    let text = read(path)?;
    let mut by_channel: BTreeMap<Channel, TimeSeries> = BTreeMap::new();
    for (line, fields) in rows(path, &text, SIGNALS_HEADER)? {
        let [t, ch, v] = fields?;
        let t = parse_t(path, line, t)?;
        let channel: Channel = ch.parse().map_err(|e: String| format_err(path, line, e))?;
        let value = parse_value(path, line, v)?;
        report.samples_total += 1;
        let series = by_channel
            .entry(channel)
            .or_insert_with(|| TimeSeries::new(channel, Vec::new(), Vec::new()));
        if let Some(&last) = series.timestamps.last() {
            if t <= last {
                return Err(format_err(
                    path,
                    line,
                    format!("{channel} timestamp {t} not after previous {last}"),
                ));
            }
        }
        if !value.is_finite() {
            report.samples_dropped += 1;
            continue;
        }
        series.timestamps.push(t);
        series.values.push(value);
    }
    Ok(by_channel.into_values().collect())
}

fn load_labels(path: &Path, span: Option<(i64, i64)>, report: &mut LoadReport) -> Result<Vec<LabelSample>, IngestError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (line, fields) in rows(path, &text, LABELS_HEADER)? {
        let [t, k, v] = fields?;
        let t_ms = parse_t(path, line, t)?;
        let kind: VitalKind = k.parse().map_err(|e: String| format_err(path, line, e))?;
        let value = parse_value(path, line, v)?;
        report.labels_total += 1;
        let inside = span.is_some_and(|(lo, hi)| t_ms >= lo && t_ms <= hi);
        if !inside || !kind.is_plausible(value) {
            report.labels_dropped += 1;
            continue;
        }
        out.push(LabelSample { kind, t_ms, value });
    }
    Ok(out)
}

/// `signals.csv` body for a record.
pub fn signals_csv(record: &SessionRecord) -> String {
    let mut rows: Vec<(i64, Channel, f64)> = record
        .signals
        .iter()
        .flat_map(|s| s.timestamps.iter().zip(&s.values).map(move |(t, v)| (*t, s.channel, *v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = String::with_capacity(rows.len() * 28 + 20);
    out.push_str(SIGNALS_HEADER);
    out.push('\n');
    for (t, ch, v) in rows {
        let _ = writeln!(out, "{t},{ch},{v}");
    }
    out
}

/// `labels.csv` body for a record.
pub fn labels_csv(record: &SessionRecord) -> String {
    let mut rows: Vec<&LabelSample> = record.labels.iter().collect();
    rows.sort_by(|a, b| a.t_ms.cmp(&b.t_ms).then(a.kind.cmp(&b.kind)));
    let mut out = String::new();
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for l in rows {
        let _ = writeln!(out, "{},{},{}", l.t_ms, l.kind, l.value);
    }
    out
}

fn write_file(path: PathBuf, body: &str) -> Result<(), IngestError> {
    fs::write(&path, body).map_err(|source| IngestError::Io { path, source })
}

pub fn write_session(record: &SessionRecord, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let meta = SessionMeta {
        session_id: record.session_id.clone(),
        subject_id: record.subject_id.clone(),
        ring_type: record.ring_type,
        activities: record
            .activities
            .iter()
            .map(|a| ActivityMeta {
                tag: a.tag,
                start_ms: a.start_ms,
                end_ms: a.end_ms,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("session metadata serializes");
    json.push('\n');
    write_file(dir.join(SESSION_FILE), &json)?;
    write_file(dir.join(SIGNALS_FILE), &signals_csv(record))?;
    write_file(dir.join(LABELS_FILE), &labels_csv(record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dir(signals: &str, labels: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(SESSION_FILE),
            r#"{"session_id":"s1","subject_id":"p1","ring_type":"reflective",
               "activities":[{"tag":"sitting","start_ms":0,"end_ms":400000}]}"#,
        )
        .unwrap();
        fs::write(dir.path().join(SIGNALS_FILE), signals).unwrap();
        fs::write(dir.path().join(LABELS_FILE), labels).unwrap();
        dir
    }

    fn five_channel_signals(n: usize) -> String {
        let mut s = String::from("t_ms,channel,value\n");
        for i in 0..n {
            for ch in ["ppg_ir", "ppg_red", "acc_x", "acc_y", "acc_z"] {
                let _ = writeln!(s, "{},{ch},{}", i * 10, i as f64 * 0.5);
            }
        }
        s
    }

    fn hr_labels(n: usize) -> String {
        let mut s = String::from("t_ms,kind,value\n");
        for i in 0..n {
            let _ = writeln!(s, "{},hr,72", i * 1000);
        }
        s
    }

    #[test]
    fn happy_path_has_five_ring_channels() {
        let dir = write_dir(&five_channel_signals(200), &hr_labels(2));
        let loaded = load_session(dir.path()).unwrap();
        assert_eq!(loaded.record.signals.len(), 5);
        assert!(loaded.record.signals.iter().all(|s| s.len() == 200));
        assert_eq!(loaded.record.labels.len(), 2);
        assert_eq!(loaded.report.labels_dropped, 0);
    }

    #[test]
    fn shuffled_timestamps_cite_first_bad_line() {
        let body = "t_ms,channel,value\n0,ppg_ir,1\n20,ppg_ir,2\n10,ppg_ir,3\n5,ppg_ir,4\n";
        let dir = write_dir(body, "t_ms,kind,value\n");
        match load_session(dir.path()) {
            Err(IngestError::Format { line, file, .. }) => {
                assert_eq!(line, 4);
                assert!(file.ends_with(SIGNALS_FILE));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn implausible_spo2_dropped_and_counted() {
        let mut labels = hr_labels(300);
        labels.push_str("5000,spo2,150\n");
        let dir = write_dir(&five_channel_signals(400), &labels);
        let loaded = load_session(dir.path()).unwrap();
        assert_eq!(loaded.report.labels_dropped, 1);
        assert!(loaded.record.labels.iter().all(|l| l.kind != VitalKind::Spo2));
    }

    #[test]
    fn too_many_bad_labels_fail_validation() {
        let labels = "t_ms,kind,value\n0,hr,72\n1000,spo2,150\n";
        let dir = write_dir(&five_channel_signals(200), labels);
        assert!(matches!(load_session(dir.path()), Err(IngestError::Validation(_))));
    }

    #[test]
    fn bad_header_and_field_count() {
        let dir = write_dir("time,channel,value\n", "t_ms,kind,value\n");
        assert!(matches!(load_session(dir.path()), Err(IngestError::Format { line: 1, .. })));
        let dir = write_dir("t_ms,channel,value\n0,ppg_ir,1,2\n", "t_ms,kind,value\n");
        assert!(matches!(load_session(dir.path()), Err(IngestError::Format { line: 2, .. })));
        let dir = write_dir("t_ms,channel,value\n0,ppg_ir,1\n10,ppg_green,1\n", "t_ms,kind,value\n");
        assert!(matches!(load_session(dir.path()), Err(IngestError::Format { line: 3, .. })));
        let dir = write_dir("t_ms,channel,value\n0,ppg_ir,1\n10,ppg_ir,1,000\n", "t_ms,kind,value\n");
        assert!(matches!(load_session(dir.path()), Err(IngestError::Format { line: 3, .. })));
    }

    #[test]
    fn missing_channels_are_absent() {
        let dir = write_dir("t_ms,channel,value\n0,ppg_ir,1\n10,ppg_ir,2\n", "t_ms,kind,value\n");
        let loaded = load_session(dir.path()).unwrap();
        assert_eq!(loaded.record.signals.len(), 1);
        assert!(loaded.record.series(Channel::AccX).is_none());
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = write_dir(&five_channel_signals(50), &hr_labels(3));
        let loaded = load_session(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_session(&loaded.record, out.path()).unwrap();
        for f in [SIGNALS_FILE, LABELS_FILE] {
            let a = fs::read_to_string(dir.path().join(f)).unwrap();
            let b = fs::read_to_string(out.path().join(f)).unwrap();
            assert_eq!(a.trim_end(), b.trim_end(), "{f}");
        }
        let again = load_session(out.path()).unwrap();
        assert_eq!(again.record, loaded.record);
    }
}
