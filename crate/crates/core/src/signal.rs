//! Shared domain types: channels, time series, windows, activity tags and
//! vital-sign kinds.
//!
//! Units: timestamps are integer milliseconds since the epoch, PPG values are
//! raw ADC counts, accelerometer values are in g, reference waveforms are in
//! device units.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SignalError;

/// Sampling-rate gate applied when a window is cut from source series.
pub const DEFAULT_RATE_GATE_HZ: f64 = 95.0;

/// Default analysis window length in seconds.
pub const DEFAULT_WINDOW_S: f64 = 30.0;

/// Default uniform resampling rate.
pub const DEFAULT_RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    PpgIr,
    PpgRed,
    AccX,
    AccY,
    AccZ,
    BvpRef,
    RespRef,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::PpgIr,
        Channel::PpgRed,
        Channel::AccX,
        Channel::AccY,
        Channel::AccZ,
        Channel::BvpRef,
        Channel::RespRef,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::PpgIr => "ppg_ir",
            Channel::PpgRed => "ppg_red",
            Channel::AccX => "acc_x",
            Channel::AccY => "acc_y",
            Channel::AccZ => "acc_z",
            Channel::BvpRef => "bvp_ref",
            Channel::RespRef => "resp_ref",
        }
    }

    pub fn is_ppg(self) -> bool {
        matches!(self, Channel::PpgIr | Channel::PpgRed)
    }

    pub fn is_acc(self) -> bool {
        matches!(self, Channel::AccX | Channel::AccY | Channel::AccZ)
    }

    /// Ring inputs may be fed to estimators; reference channels never are.
    pub fn is_ring_input(self) -> bool {
        self.is_ppg() || self.is_acc()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

/// Optical path of the ring's PPG sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingType {
    Reflective,
    Transmissive,
}

impl RingType {
    pub fn as_str(self) -> &'static str {
        match self {
            RingType::Reflective => "reflective",
            RingType::Transmissive => "transmissive",
        }
    }
}

impl fmt::Display for RingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Stationary,
    Motion,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Stationary => "stationary",
            Scenario::Motion => "motion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityTag {
    Sitting,
    Talking,
    ShakingHead,
    Standing,
    Walking,
    LowOxygen,
    DeepSquat,
    Other,
}

impl ActivityTag {
    pub const ALL: [ActivityTag; 8] = [
        ActivityTag::Sitting,
        ActivityTag::Talking,
        ActivityTag::ShakingHead,
        ActivityTag::Standing,
        ActivityTag::Walking,
        ActivityTag::LowOxygen,
        ActivityTag::DeepSquat,
        ActivityTag::Other,
    ];

    /// Walking and deep squats are motion; everything else counts as
    /// stationary, including `Other`.
    pub fn scenario(self) -> Scenario {
        match self {
            ActivityTag::Walking | ActivityTag::DeepSquat => Scenario::Motion,
            ActivityTag::Sitting
            | ActivityTag::Talking
            | ActivityTag::ShakingHead
            | ActivityTag::Standing
            | ActivityTag::LowOxygen
            | ActivityTag::Other => Scenario::Stationary,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityTag::Sitting => "sitting",
            ActivityTag::Talking => "talking",
            ActivityTag::ShakingHead => "shaking_head",
            ActivityTag::Standing => "standing",
            ActivityTag::Walking => "walking",
            ActivityTag::LowOxygen => "low_oxygen",
            ActivityTag::DeepSquat => "deep_squat",
            ActivityTag::Other => "other",
        }
    }
}

impl FromStr for ActivityTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivityTag::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalKind {
    Hr,
    Rr,
    Spo2,
    Sbp,
    Dbp,
}

impl VitalKind {
    pub const ALL: [VitalKind; 5] = [
        VitalKind::Hr,
        VitalKind::Rr,
        VitalKind::Spo2,
        VitalKind::Sbp,
        VitalKind::Dbp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VitalKind::Hr => "hr",
            VitalKind::Rr => "rr",
            VitalKind::Spo2 => "spo2",
            VitalKind::Sbp => "sbp",
            VitalKind::Dbp => "dbp",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            VitalKind::Hr => "beats/min",
            VitalKind::Rr => "breaths/min",
            VitalKind::Spo2 => "percent",
            VitalKind::Sbp | VitalKind::Dbp => "mmHg",
        }
    }

    /// Plausibility bounds for label validation and out-of-band flagging.
    /// Wider than any single cohort's observed range.
    pub fn plausible_range(self) -> (f64, f64) {
        match self {
            VitalKind::Hr => (25.0, 220.0),
            VitalKind::Rr => (4.0, 40.0),
            VitalKind::Spo2 => (70.0, 100.0),
            VitalKind::Sbp => (70.0, 200.0),
            VitalKind::Dbp => (40.0, 120.0),
        }
    }

    pub fn is_plausible(self, value: f64) -> bool {
        let (lo, hi) = self.plausible_range();
        value.is_finite() && value >= lo && value <= hi
    }
}

impl fmt::Display for VitalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VitalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VitalKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown vital kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub channel: Channel,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    NonMonotone { index: usize },
    NonFinite { index: usize },
    LengthMismatch { timestamps: usize, values: usize },
}

impl TimeSeries {
    pub fn new(channel: Channel, timestamps: Vec<i64>, values: Vec<f64>) -> Self {
        Self {
            channel,
            timestamps,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample count divided by the requested span, in Hz.
    pub fn effective_rate_in(&self, start_ms: i64, end_ms: i64) -> f64 {
        if end_ms <= start_ms {
            return 0.0;
        }
        let lo = self.timestamps.partition_point(|&t| t < start_ms);
        let hi = self.timestamps.partition_point(|&t| t < end_ms);
        (hi - lo) as f64 * 1000.0 / (end_ms - start_ms) as f64
    }

    /// Linear interpolation onto `n` points spaced `1000 / rate_hz` ms apart,
    /// starting at `start_ms`. Points outside the series take the nearest
    /// endpoint value.
    pub fn resample(&self, start_ms: i64, rate_hz: f64, n: usize) -> Vec<f64> {
        let step = 1000.0 / rate_hz;
        let ts = &self.timestamps;
        let vs = &self.values;
        let mut out = Vec::with_capacity(n);
        if ts.is_empty() {
            out.resize(n, 0.0);
            return out;
        }
        let mut j = 0usize;
        for i in 0..n {
            let t = start_ms as f64 + i as f64 * step;
            while j + 1 < ts.len() && (ts[j + 1] as f64) <= t {
                j += 1;
            }
            let v = if t <= ts[0] as f64 {
                vs[0]
            } else if j + 1 >= ts.len() {
                vs[ts.len() - 1]
            } else {
                let (t0, t1) = (ts[j] as f64, ts[j + 1] as f64);
                let frac = (t - t0) / (t1 - t0);
                vs[j] + frac * (vs[j + 1] - vs[j])
            };
            out.push(v);
        }
        out
    }
}

/// Lists every invariant violation in the series. An empty result means the
/// series is valid.
pub fn validate_series(s: &TimeSeries) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.timestamps.len() != s.values.len() {
        out.push(Violation::LengthMismatch {
            timestamps: s.timestamps.len(),
            values: s.values.len(),
        });
    }
    for i in 1..s.timestamps.len() {
        if s.timestamps[i] <= s.timestamps[i - 1] {
            out.push(Violation::NonMonotone { index: i });
        }
    }
    for (i, v) in s.values.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NonFinite { index: i });
        }
    }
    out
}

/// A fixed-duration, uniformly sampled multi-channel segment.
///
/// Only constructible through [`SignalWindow::cut`] (which enforces the
/// sampling-rate gate against the source series) or
/// [`SignalWindow::from_uniform`] (which enforces it against the declared
/// rate).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    session_id: Arc<str>,
    start_ms: i64,
    duration_s: f64,
    rate_hz: f64,
    channels: BTreeMap<Channel, Vec<f64>>,
    activity: ActivityTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowGeometry {
    pub start_ms: i64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub gate_hz: f64,
}

impl WindowGeometry {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    pub fn end_ms(&self) -> i64 {
        self.start_ms + (self.duration_s * 1000.0).round() as i64
    }
}

impl SignalWindow {
    /// Cuts a window out of source series. Fails with `BelowRateGate` if any
    /// source has fewer samples over the window span than the gate allows,
    /// and with `InvalidWindow` for reference channels or non-finite data.
    pub fn cut(
        session_id: Arc<str>,
        activity: ActivityTag,
        geometry: WindowGeometry,
        sources: &[&TimeSeries],
    ) -> Result<Self, SignalError> {
        check_geometry(&geometry)?;
        let end = geometry.end_ms();
        let n = geometry.samples();
        let mut channels = BTreeMap::new();
        for src in sources {
            if !src.channel.is_ring_input() {
                return Err(SignalError::InvalidWindow(format!(
                    "reference channel {} cannot be windowed",
                    src.channel
                )));
            }
            let eff = src.effective_rate_in(geometry.start_ms, end);
            if eff < geometry.gate_hz {
                return Err(SignalError::BelowRateGate {
                    channel: src.channel,
                    effective_hz: eff,
                    gate_hz: geometry.gate_hz,
                });
            }
            let samples = src.resample(geometry.start_ms, geometry.rate_hz, n);
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(SignalError::InvalidWindow("non-finite sample".into()));
            }
            channels.insert(src.channel, samples);
        }
        Ok(Self {
            session_id,
            start_ms: geometry.start_ms,
            duration_s: geometry.duration_s,
            rate_hz: geometry.rate_hz,
            channels,
            activity,
        })
    }

    /// Builds a window from already-uniform samples. The declared rate must
    /// clear the gate and every channel must have exactly
    /// `round(duration_s * rate_hz)` finite samples.
    pub fn from_uniform(
        session_id: Arc<str>,
        activity: ActivityTag,
        geometry: WindowGeometry,
        channels: BTreeMap<Channel, Vec<f64>>,
    ) -> Result<Self, SignalError> {
        check_geometry(&geometry)?;
        if geometry.rate_hz < geometry.gate_hz {
            return Err(SignalError::BelowRateGate {
                channel: channels.keys().next().copied().unwrap_or(Channel::PpgIr),
                effective_hz: geometry.rate_hz,
                gate_hz: geometry.gate_hz,
            });
        }
        let n = geometry.samples();
        for (ch, v) in &channels {
            if !ch.is_ring_input() {
                return Err(SignalError::InvalidWindow(format!(
                    "reference channel {ch} cannot be windowed"
                )));
            }
            if v.len() != n {
                return Err(SignalError::InvalidWindow(format!(
                    "channel {ch} has {} samples, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SignalError::InvalidWindow(format!("channel {ch} has non-finite samples")));
            }
        }
        Ok(Self {
            session_id,
            start_ms: geometry.start_ms,
            duration_s: geometry.duration_s,
            rate_hz: geometry.rate_hz,
            channels,
            activity,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn start_ms(&self) -> i64 {
        self.start_ms
    }

    pub fn end_ms(&self) -> i64 {
        self.start_ms + (self.duration_s * 1000.0).round() as i64
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn activity(&self) -> ActivityTag {
        self.activity
    }

    pub fn scenario(&self) -> Scenario {
        self.activity.scenario()
    }

    pub fn channel(&self, ch: Channel) -> Option<&[f64]> {
        self.channels.get(&ch).map(Vec::as_slice)
    }

    pub fn require(&self, ch: Channel) -> Result<&[f64], SignalError> {
        self.channel(ch).ok_or(SignalError::ChannelMissing(ch))
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &[f64])> {
        self.channels.iter().map(|(c, v)| (*c, v.as_slice()))
    }

    pub fn window_ref(&self) -> WindowRef {
        WindowRef {
            session_id: self.session_id.to_string(),
            start_ms: self.start_ms,
        }
    }
}

fn check_geometry(g: &WindowGeometry) -> Result<(), SignalError> {
    if !(g.duration_s > 0.0 && g.rate_hz > 0.0) {
        return Err(SignalError::InvalidWindow(format!(
            "duration {} s and rate {} Hz must be positive",
            g.duration_s, g.rate_hz
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowRef {
    pub session_id: String,
    pub start_ms: i64,
}

/// A predicted vital-sign value. Values outside the plausibility bounds are
/// flagged, never clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub kind: VitalKind,
    pub value: f64,
    pub window_ref: WindowRef,
    pub method: String,
    pub out_of_band: bool,
}

impl Estimate {
    pub fn new(kind: VitalKind, value: f64, window_ref: WindowRef, method: &str) -> Self {
        Self {
            kind,
            value,
            window_ref,
            method: method.to_string(),
            out_of_band: !kind.is_plausible(value),
        }
    }
}
