use std::sync::Arc;

use super::{LabelSample, SessionRecord};
use crate::error::SignalError;
use crate::estimators::{detect_peaks, rate_from_peaks, RateBand};
use crate::preprocess::{bandpass, mean, std_dev};
use crate::signal::{Channel, RingType, Scenario, SignalWindow, VitalKind};

/// Nominal rate of oximeter label streams.
pub const LABEL_RATE_HZ: f64 = 1.0;

/// A window keeps its label only if at least this fraction of the expected
/// label samples is present.
pub const MIN_LABEL_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub window: Arc<SignalWindow>,
    pub kind: VitalKind,
    pub reference: f64,
    pub subject_id: String,
    pub ring_type: RingType,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Default)]
pub struct Paired {
    pub pairs: Vec<LabeledPair>,
    /// Windows without a usable reference.
    pub missing_reference: usize,
}

/// Attaches a reference value of `kind` to each window, from label samples
/// or reference waveforms overlapping it.
pub fn pair_labels(windows: &[Arc<SignalWindow>], s: &SessionRecord, kind: VitalKind) -> Paired {
    let mut labels: Vec<&LabelSample> = s.labels.iter().filter(|l| l.kind == kind).collect();
    labels.sort_by_key(|l| l.t_ms);
    let mut out = Paired::default();
    for w in windows {
        let reference = match kind {
            VitalKind::Hr | VitalKind::Spo2 => overlapping_mean(&labels, w),
            VitalKind::Rr => match s.series(Channel::RespRef) {
                Some(resp) => rr_from_waveform(resp, w),
                None => overlapping_mean(&labels, w),
            },
            VitalKind::Sbp | VitalKind::Dbp => bracketing_mean(&labels, s, w),
        };
        match reference {
            Some(reference) => out.pairs.push(LabeledPair {
                window: w.clone(),
                kind,
                reference,
                subject_id: s.subject_id.clone(),
                ring_type: s.ring_type,
                scenario: w.scenario(),
            }),
            None => out.missing_reference += 1,
        }
    }
    out
}

fn overlapping_mean(labels: &[&LabelSample], w: &SignalWindow) -> Option<f64> {
    let lo = labels.partition_point(|l| l.t_ms < w.start_ms());
    let hi = labels.partition_point(|l| l.t_ms < w.end_ms());
    let inside = &labels[lo..hi];
    let expected = w.duration_s() * LABEL_RATE_HZ;
    if inside.is_empty() || (inside.len() as f64) < MIN_LABEL_COVERAGE * expected {
        return None;
    }
    Some(inside.iter().map(|l| l.value).sum::<f64>() / inside.len() as f64)
}

/// Mean of the measurements taken just before and just after the window's
/// activity segment; either alone is used when the other is missing.
fn bracketing_mean(labels: &[&LabelSample], s: &SessionRecord, w: &SignalWindow) -> Option<f64> {
    let seg = s.activity_at(w.start_ms())?;
    let before = labels.iter().rev().find(|l| l.t_ms <= seg.start_ms);
    let after = labels.iter().find(|l| l.t_ms >= seg.end_ms);
    match (before, after) {
        (Some(b), Some(a)) => Some((b.value + a.value) / 2.0),
        (Some(x), None) | (None, Some(x)) => Some(x.value),
        (None, None) => None,
    }
}

fn rr_from_waveform(resp: &crate::signal::TimeSeries, w: &SignalWindow) -> Option<f64> {
    let (first, last) = (*resp.timestamps.first()?, *resp.timestamps.last()?);
    if resp.len() < 2 || last <= first {
        return None;
    }
    let native_hz = (resp.len() - 1) as f64 * 1000.0 / (last - first) as f64;
    let present = resp.effective_rate_in(w.start_ms(), w.end_ms()) * w.duration_s();
    if present < MIN_LABEL_COVERAGE * native_hz * w.duration_s() {
        return None;
    }
    let n = (w.duration_s() * w.rate_hz()).round() as usize;
    let uniform = resp.resample(w.start_ms(), w.rate_hz(), n);
    derive_rr_reference(&uniform, w.rate_hz()).ok()
}

/// Breathing rate of a respiratory reference waveform.
///
/// The waveform is band-passed to 0.1-0.5 Hz and its peaks found with the
/// respiratory band of the peak detector. With two or more peaks the rate is
/// taken from the median peak-to-peak interval, which does not depend on
/// where the segment boundaries cut the breathing cycle; with fewer it falls
/// back to `60 × peaks / duration`.
pub fn derive_rr_reference(resp: &[f64], rate_hz: f64) -> Result<f64, SignalError> {
    let min = (10.0 * rate_hz).ceil() as usize;
    if resp.len() < min {
        return Err(SignalError::TooShort { needed: min, got: resp.len() });
    }
    if std_dev(resp) <= 1e-12 * mean(resp).abs().max(1.0) {
        return Err(SignalError::DegenerateSignal("constant respiratory signal".into()));
    }
    let band = RateBand::respiratory();
    let filtered = bandpass(resp, rate_hz, &band.filter)?;
    let peaks = detect_peaks(&filtered, rate_hz, &band)?;
    let duration_s = resp.len() as f64 / rate_hz;
    Ok(match peaks.as_slice() {
        [_, _, ..] => {
            let mut intervals: Vec<f64> = peaks
                .windows(2)
                .map(|w| refine(&filtered, w[1]) - refine(&filtered, w[0]))
                .collect();
            intervals.sort_by(f64::total_cmp);
            let m = intervals.len();
            let median = if m % 2 == 1 {
                intervals[m / 2]
            } else {
                0.5 * (intervals[m / 2 - 1] + intervals[m / 2])
            };
            60.0 * rate_hz / median
        }
        _ => rate_from_peaks(peaks.len(), duration_s, &band).per_min,
    })
}

/// Sub-sample peak position from a parabola through the peak and its
/// neighbours.
fn refine(x: &[f64], p: usize) -> f64 {
    if p == 0 || p + 1 >= x.len() {
        return p as f64;
    }
    let (a, b, c) = (x[p - 1], x[p], x[p + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::EPSILON {
        return p as f64;
    }
    p as f64 + 0.5 * (a - c) / denom
}
