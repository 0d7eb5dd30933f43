//! Session recordings on disk, windowing, label pairing and subject-disjoint
//! cross-validation folds.

mod folds;
mod format;
mod pairing;
mod window;

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, FoldPlan, Split};
pub use format::{
    labels_csv, load_session, load_session_with, signals_csv, write_session, LoadOptions, LoadReport, LoadedSession,
    LABELS_FILE, SESSION_FILE, SIGNALS_FILE,
};
pub use pairing::{derive_rr_reference, pair_labels, LabeledPair, Paired, LABEL_RATE_HZ, MIN_LABEL_COVERAGE};
pub use window::{window_session, WindowConfig, Windowed};

use crate::signal::{ActivityTag, Channel, RingType, TimeSeries, VitalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSample {
    pub kind: VitalKind,
    pub t_ms: i64,
    pub value: f64,
}

/// Half-open activity interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySegment {
    pub tag: ActivityTag,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl ActivitySegment {
    pub fn contains(&self, t_ms: i64) -> bool {
        t_ms >= self.start_ms && t_ms < self.end_ms
    }
}

/// One subject-session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub session_id: String,
    pub subject_id: String,
    pub ring_type: RingType,
    /// At most one series per channel, ordered by channel.
    pub signals: Vec<TimeSeries>,
    /// Sorted by start time.
    pub activities: Vec<ActivitySegment>,
    pub labels: Vec<LabelSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionViolation {
    Series { channel: Channel, violation: crate::signal::Violation },
    OverlappingActivities { first: usize, second: usize },
    EmptyActivity { index: usize },
    LabelOutsideSpan { index: usize },
    ImplausibleLabel { index: usize },
    DuplicateChannel(Channel),
}

impl SessionRecord {
    pub fn series(&self, channel: Channel) -> Option<&TimeSeries> {
        self.signals.iter().find(|s| s.channel == channel)
    }

    pub fn ring_channels(&self) -> impl Iterator<Item = &TimeSeries> {
        self.signals.iter().filter(|s| s.channel.is_ring_input())
    }

    /// Earliest and latest instants covered by signals or activities.
    pub fn span(&self) -> Option<(i64, i64)> {
        let sig = self
            .signals
            .iter()
            .filter_map(|s| Some((*s.timestamps.first()?, *s.timestamps.last()?)));
        let act = self.activities.iter().map(|a| (a.start_ms, a.end_ms));
        sig.chain(act).fold(None, |acc, (lo, hi)| match acc {
            None => Some((lo, hi)),
            Some((a, b)) => Some((a.min(lo), b.max(hi))),
        })
    }

    pub fn activity_at(&self, t_ms: i64) -> Option<&ActivitySegment> {
        self.activities.iter().find(|a| a.contains(t_ms))
    }

    /// Every invariant violation in the record; empty means valid.
    pub fn violations(&self) -> Vec<SessionViolation> {
        let mut out = Vec::new();
        for (i, s) in self.signals.iter().enumerate() {
            if self.signals[..i].iter().any(|o| o.channel == s.channel) {
                out.push(SessionViolation::DuplicateChannel(s.channel));
            }
            out.extend(
                crate::signal::validate_series(s)
                    .into_iter()
                    .map(|violation| SessionViolation::Series { channel: s.channel, violation }),
            );
        }
        for (i, a) in self.activities.iter().enumerate() {
            if a.end_ms <= a.start_ms {
                out.push(SessionViolation::EmptyActivity { index: i });
            }
            for (j, b) in self.activities.iter().enumerate().skip(i + 1) {
                if a.start_ms < b.end_ms && b.start_ms < a.end_ms {
                    out.push(SessionViolation::OverlappingActivities { first: i, second: j });
                }
            }
        }
        let span = self.span();
        for (i, l) in self.labels.iter().enumerate() {
            if !span.is_some_and(|(lo, hi)| l.t_ms >= lo && l.t_ms <= hi) {
                out.push(SessionViolation::LabelOutsideSpan { index: i });
            }
            if !l.kind.is_plausible(l.value) {
                out.push(SessionViolation::ImplausibleLabel { index: i });
            }
        }
        out
    }
}
