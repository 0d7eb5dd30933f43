//! Seeded synthetic sessions with known ground truth.
//!
//! The PPG model is
//!
//! ```text
//! ppg(t) = DC · (1 + wander·sin ψ(t) + k·perfusion·(1 + am·sin ψ(t))·pulse(φ(t))) · (1 + motion(t)) + noise
//! ```
//!
//! where `φ` integrates the heart-rate trajectory, `ψ` the respiratory one,
//! `pulse` is a zero-mean two-lobe beat template normalised to unit
//! sinusoid-equivalent amplitude, and `k` is 1 for IR and the target ratio
//! for red. Labels are emitted at 1 Hz from the trajectories; blood pressure
//! is emitted once at every activity boundary.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::estimators::SpO2Calibration;
use crate::ingest::{ActivitySegment, LabelSample, SessionRecord};
use crate::signal::{ActivityTag, Channel, RingType, TimeSeries, VitalKind};

/// Piecewise-linear trajectory over session time, held constant outside its
/// knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(t_s, value)` knots, sorted by time.
    pub knots: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn constant(v: f64) -> Self {
        Self { knots: vec![(0.0, v)] }
    }

    pub fn at(&self, t_s: f64) -> f64 {
        let k = &self.knots;
        match k.iter().position(|(t, _)| *t > t_s) {
            Some(0) => k[0].1,
            None => k.last().map_or(0.0, |p| p.1),
            Some(i) => {
                let (t0, v0) = k[i - 1];
                let (t1, v1) = k[i];
                v0 + (v1 - v0) * (t_s - t0) / (t1 - t0)
            }
        }
    }

    fn range(&self) -> (f64, f64) {
        self.knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Motion {
    #[default]
    None,
    Walk { step_hz: f64 },
    Squat { cycle_hz: f64 },
}

impl Motion {
    /// Default stress model for an activity.
    pub fn for_activity(tag: ActivityTag) -> Self {
        match tag {
            ActivityTag::Walking => Motion::Walk { step_hz: 2.0 },
            ActivityTag::DeepSquat => Motion::Squat { cycle_hz: 0.5 },
            _ => Motion::None,
        }
    }

    fn fundamental(self) -> Option<f64> {
        match self {
            Motion::None => None,
            Motion::Walk { step_hz } => Some(step_hz),
            Motion::Squat { cycle_hz } => Some(cycle_hz),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSegment {
    pub activity: ActivityTag,
    pub duration_s: f64,
    #[serde(default)]
    pub motion: Motion,
}

impl SynthSegment {
    pub fn new(activity: ActivityTag, duration_s: f64) -> Self {
        Self {
            activity,
            duration_s,
            motion: Motion::for_activity(activity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub session_id: String,
    pub subject_id: String,
    pub ring_type: RingType,
    pub start_ms: i64,
    pub rate_hz: f64,
    pub resp_rate_hz: f64,
    pub segments: Vec<SynthSegment>,
    pub hr_bpm: Trajectory,
    pub rr_bpm: Trajectory,
    pub target_r: f64,
    pub dc_ir: f64,
    pub dc_red: f64,
    /// AC/DC of the IR channel.
    pub perfusion: f64,
    /// Dicrotic lobe amplitude relative to the systolic lobe.
    pub notch_amp: f64,
    /// Signal-to-noise ratio against each channel's pulsatile power; `None`
    /// for noise-free output.
    pub noise_snr_db: Option<f64>,
    /// Relative depth of multiplicative motion modulation on PPG.
    pub motion_depth: f64,
    /// Respiratory baseline wander, relative to DC.
    pub wander: f64,
    /// Respiratory amplitude modulation of the pulsatile component.
    pub am_depth: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            session_id: "synth-0".into(),
            subject_id: "s00".into(),
            ring_type: RingType::Reflective,
            start_ms: 1_700_000_000_000,
            rate_hz: 100.0,
            resp_rate_hz: 50.0,
            segments: vec![SynthSegment::new(ActivityTag::Sitting, 60.0)],
            hr_bpm: Trajectory::constant(75.0),
            rr_bpm: Trajectory::constant(15.0),
            target_r: 1.0,
            dc_ir: 60_000.0,
            dc_red: 40_000.0,
            perfusion: 0.02,
            notch_amp: 0.2,
            noise_snr_db: None,
            motion_depth: 0.03,
            wander: 0.02,
            am_depth: 0.05,
            sbp: 118.0,
            dbp: 76.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInvalid(m));
        if self.segments.is_empty() {
            return bad("no segments".into());
        }
        if self.segments.iter().any(|s| s.duration_s.is_nan() || s.duration_s <= 0.0) {
            return bad("segment durations must be positive".into());
        }
        if !(self.rate_hz > 0.0 && self.resp_rate_hz > 0.0) {
            return bad("sampling rates must be positive".into());
        }
        for (name, traj, lo, hi) in [("hr", &self.hr_bpm, 30.0, 180.0), ("rr", &self.rr_bpm, 6.0, 30.0)] {
            if traj.knots.is_empty() {
                return bad(format!("{name} trajectory has no knots"));
            }
            if traj.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad(format!("{name} knots not strictly increasing in time"));
            }
            let (min, max) = traj.range();
            if min < lo || max > hi {
                return bad(format!("{name} trajectory {min}..{max} outside [{lo}, {hi}]"));
            }
        }
        if self.target_r.is_nan() || self.target_r <= 0.0 {
            return bad(format!("target ratio {} must be positive", self.target_r));
        }
        if !(self.dc_ir > 0.0 && self.dc_red > 0.0 && self.perfusion > 0.0) {
            return bad("DC levels and perfusion must be positive".into());
        }
        if self.wander < 0.0 || self.am_depth < 0.0 || self.motion_depth < 0.0 || self.notch_amp < 0.0 {
            return bad("modulation depths must be non-negative".into());
        }
        Ok(())
    }

    /// SpO2 label implied by the target ratio under the ring's default
    /// calibration.
    pub fn spo2_label(&self) -> f64 {
        let cal = SpO2Calibration::for_ring(self.ring_type);
        cal.a - cal.b * self.target_r
    }
}

/// Zero-mean two-lobe beat template sampled on a fine phase grid.
struct PulseTemplate {
    table: Vec<f64>,
}

impl PulseTemplate {
    const SIZE: usize = 4096;
    const SYSTOLIC: (f64, f64) = (0.2, 0.1);
    const DICROTIC: (f64, f64) = (0.5, 0.12);

    fn new(notch_amp: f64) -> Self {
        let lobe = |u: f64, (c, w): (f64, f64)| {
            (-1..=1)
                .map(|k| {
                    let d = u - c + k as f64;
                    (-0.5 * (d / w).powi(2)).exp()
                })
                .sum::<f64>()
        };
        let mut table: Vec<f64> = (0..Self::SIZE)
            .map(|i| {
                let u = i as f64 / Self::SIZE as f64;
                lobe(u, Self::SYSTOLIC) + notch_amp * lobe(u, Self::DICROTIC)
            })
            .collect();
        let mean = table.iter().sum::<f64>() / table.len() as f64;
        let rms = (table.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / table.len() as f64).sqrt();
        for v in &mut table {
            *v = (*v - mean) / (rms * SQRT_2);
        }
        Self { table }
    }

    fn at(&self, phase: f64) -> f64 {
        let u = phase.rem_euclid(1.0) * Self::SIZE as f64;
        let i = u.floor() as usize % Self::SIZE;
        let j = (i + 1) % Self::SIZE;
        let frac = u - u.floor();
        self.table[i] * (1.0 - frac) + self.table[j] * frac
    }
}

/// Cycle counts obtained by integrating `traj / 60` at `rate_hz`, one value
/// per sample starting from zero.
fn integrate_phase(traj: &Trajectory, rate_hz: f64, n: usize) -> Vec<f64> {
    let dt = 1.0 / rate_hz;
    let mut phase = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = traj.at(0.0) / 60.0;
    for i in 0..n {
        if i > 0 {
            let cur = traj.at(i as f64 * dt) / 60.0;
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
        }
        phase.push(acc);
    }
    phase
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

fn timestamps(start_ms: i64, rate_hz: f64, n: usize) -> Vec<i64> {
    (0..n)
        .map(|i| start_ms + (i as f64 * 1000.0 / rate_hz).round() as i64)
        .collect()
}

/// Noise-free signals per sample, before rounding.
struct Clean {
    ir: Vec<f64>,
    red: Vec<f64>,
    motion_fundamental: Vec<Option<f64>>,
}

fn render_clean(spec: &SynthSpec, n: usize) -> Clean {
    let template = PulseTemplate::new(spec.notch_amp);
    let fs = spec.rate_hz;
    let cardiac = integrate_phase(&spec.hr_bpm, fs, n);
    let resp = integrate_phase(&spec.rr_bpm, fs, n);

    let mut bounds = Vec::with_capacity(spec.segments.len());
    let mut t0 = 0.0;
    for seg in &spec.segments {
        bounds.push((t0, t0 + seg.duration_s, seg.motion));
        t0 += seg.duration_s;
    }

    let mut ir = Vec::with_capacity(n);
    let mut red = Vec::with_capacity(n);
    let mut motion_fundamental = Vec::with_capacity(n);
    let mut seg_idx = 0;
    for i in 0..n {
        let t = i as f64 / fs;
        while seg_idx + 1 < bounds.len() && t >= bounds[seg_idx].1 {
            seg_idx += 1;
        }
        let motion = bounds[seg_idx].2.fundamental();
        let m = motion.map_or(0.0, |f| {
            spec.motion_depth * ((2.0 * PI * f * t).sin() + 0.5 * (4.0 * PI * f * t).sin())
        });
        let breath = (2.0 * PI * resp[i]).sin();
        let pulse = (1.0 + spec.am_depth * breath) * template.at(cardiac[i]);
        let base = 1.0 + spec.wander * breath;
        ir.push(spec.dc_ir * (base + spec.perfusion * pulse) * (1.0 + m));
        red.push(spec.dc_red * (base + spec.target_r * spec.perfusion * pulse) * (1.0 + m));
        motion_fundamental.push(motion);
    }
    Clean {
        ir,
        red,
        motion_fundamental,
    }
}

/// Generates one session from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SessionRecord, SynthError> {
    spec.validate()?;
    let fs = spec.rate_hz;
    let total_s = spec.duration_s();
    let n = (total_s * fs).round() as usize;
    let ts = timestamps(spec.start_ms, fs, n);
    let clean = render_clean(spec, n);

    let stream_rng = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        rng
    };

    let noisy = |clean: &[f64], dc: f64, ac_rel: f64, stream: u64| -> Vec<f64> {
        match spec.noise_snr_db {
            Some(snr) => {
                let signal_rms = dc * ac_rel / SQRT_2;
                let sigma = signal_rms / 10f64.powf(snr / 20.0);
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                let mut rng = stream_rng(stream);
                clean.iter().map(|v| round_to(v + normal.sample(&mut rng), 4)).collect()
            }
            None => clean.iter().map(|v| round_to(*v, 4)).collect(),
        }
    };
    let ir = noisy(&clean.ir, spec.dc_ir, spec.perfusion, 1);
    let red = noisy(&clean.red, spec.dc_red, spec.perfusion * spec.target_r, 2);

    let acc_noise = Normal::new(0.0, 0.01).expect("finite sigma");
    let mut acc: Vec<Vec<f64>> = (0..3)
        .map(|axis| {
            let mut rng = stream_rng(3 + axis as u64);
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let gravity = if axis == 2 { 1.0 } else { 0.0 };
                    let motion = clean.motion_fundamental[i].map_or(0.0, |f| {
                        let wave = (2.0 * PI * f * t + axis as f64).sin() + 0.5 * (4.0 * PI * f * t).sin();
                        let gain = match (axis, f >= 1.0) {
                            (2, false) => 0.5,
                            (_, false) => 0.1,
                            (_, true) => 0.3,
                        };
                        gain * wave
                    });
                    round_to(gravity + motion + acc_noise.sample(&mut rng), 6)
                })
                .collect()
        })
        .collect();
    let acc_z = acc.pop().expect("three axes");
    let acc_y = acc.pop().expect("three axes");
    let acc_x = acc.pop().expect("three axes");

    let n_resp = (total_s * spec.resp_rate_hz).round() as usize;
    let resp_phase = integrate_phase(&spec.rr_bpm, spec.resp_rate_hz, n_resp);
    let resp_noise = spec
        .noise_snr_db
        .map(|snr| Normal::new(0.0, (0.5f64).sqrt() / 10f64.powf(snr / 20.0)).expect("finite sigma"));
    let mut rng = stream_rng(6);
    let resp: Vec<f64> = resp_phase
        .iter()
        .map(|p| {
            let noise = resp_noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            round_to((2.0 * PI * p).sin() + noise, 6)
        })
        .collect();

    let signals = vec![
        TimeSeries::new(Channel::PpgIr, ts.clone(), ir),
        TimeSeries::new(Channel::PpgRed, ts.clone(), red),
        TimeSeries::new(Channel::AccX, ts.clone(), acc_x),
        TimeSeries::new(Channel::AccY, ts.clone(), acc_y),
        TimeSeries::new(Channel::AccZ, ts, acc_z),
        TimeSeries::new(Channel::RespRef, timestamps(spec.start_ms, spec.resp_rate_hz, n_resp), resp),
    ];

    let mut activities = Vec::with_capacity(spec.segments.len());
    let mut t0 = 0.0f64;
    for seg in &spec.segments {
        let start_ms = spec.start_ms + (t0 * 1000.0).round() as i64;
        t0 += seg.duration_s;
        activities.push(ActivitySegment {
            tag: seg.activity,
            start_ms,
            end_ms: spec.start_ms + (t0 * 1000.0).round() as i64,
        });
    }

    let mut labels = Vec::new();
    let spo2 = round_to(spec.spo2_label(), 2);
    let last_sample_ms = spec.start_ms + ((n.max(1) - 1) as f64 * 1000.0 / fs).round() as i64;
    let mut sec = 0i64;
    while spec.start_ms + sec * 1000 <= last_sample_ms {
        let t_ms = spec.start_ms + sec * 1000;
        let t = sec as f64;
        labels.push(LabelSample { kind: VitalKind::Hr, t_ms, value: round_to(spec.hr_bpm.at(t), 2) });
        labels.push(LabelSample { kind: VitalKind::Rr, t_ms, value: round_to(spec.rr_bpm.at(t), 2) });
        labels.push(LabelSample { kind: VitalKind::Spo2, t_ms, value: spo2 });
        sec += 1;
    }
    let mut bp_rng = stream_rng(7);
    let mut boundaries: Vec<i64> = activities.iter().map(|a| a.start_ms).collect();
    boundaries.push(last_sample_ms);
    for t_ms in boundaries {
        let sbp = spec.sbp + bp_rng.random_range(-3.0..3.0);
        let dbp = spec.dbp + bp_rng.random_range(-2.0..2.0);
        labels.push(LabelSample { kind: VitalKind::Sbp, t_ms, value: round_to(sbp, 1) });
        labels.push(LabelSample { kind: VitalKind::Dbp, t_ms, value: round_to(dbp, 1) });
    }
    labels.sort_by(|a, b| a.t_ms.cmp(&b.t_ms).then(a.kind.cmp(&b.kind)));

    Ok(SessionRecord {
        session_id: spec.session_id.clone(),
        subject_id: spec.subject_id.clone(),
        ring_type: spec.ring_type,
        signals,
        activities,
        labels,
    })
}

/// Describes a multi-subject synthetic dataset; expanded into one
/// [`SynthSpec`] per subject by [`CohortSpec::sessions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub subjects: usize,
    pub ring_type: RingType,
    pub seed: u64,
    pub protocol: Vec<SynthSegment>,
    pub hr_range: (f64, f64),
    /// Added to the heart rate during motion segments.
    pub motion_hr_boost: f64,
    pub rr_range: (f64, f64),
    pub r_range: (f64, f64),
    /// Extra ratio during low-oxygen segments is not modelled; the ratio is
    /// constant per subject.
    pub noise_snr_db: Option<f64>,
    pub motion_depth: f64,
    pub notch_amp: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            subjects: 34,
            ring_type: RingType::Reflective,
            seed: 0,
            protocol: vec![
                SynthSegment::new(ActivityTag::Sitting, 60.0),
                SynthSegment::new(ActivityTag::Walking, 60.0),
            ],
            hr_range: (60.0, 90.0),
            motion_hr_boost: 10.0,
            rr_range: (10.0, 20.0),
            r_range: (0.5, 1.2),
            noise_snr_db: Some(20.0),
            motion_depth: 0.03,
            notch_amp: 0.2,
        }
    }
}

impl CohortSpec {
    pub fn sessions(&self) -> Vec<SynthSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.subjects)
            .map(|i| {
                let subject_seed: u64 = rng.random();
                let mut r = ChaCha8Rng::seed_from_u64(subject_seed);
                let base_hr = r.random_range(self.hr_range.0..=self.hr_range.1);
                let mut hr_knots = Vec::new();
                let mut t = 0.0;
                for seg in &self.protocol {
                    let boost = if seg.activity.scenario() == crate::signal::Scenario::Motion {
                        self.motion_hr_boost
                    } else {
                        0.0
                    };
                    let v = (base_hr + boost + r.random_range(-5.0..=5.0)).clamp(30.0, 180.0);
                    hr_knots.push((t + 0.5 * seg.duration_s, v));
                    t += seg.duration_s;
                }
                let rr = r.random_range(self.rr_range.0..=self.rr_range.1);
                let target_r = r.random_range(self.r_range.0..=self.r_range.1);
                SynthSpec {
                    session_id: format!("synth-{i:03}"),
                    subject_id: format!("s{i:03}"),
                    ring_type: self.ring_type,
                    segments: self.protocol.clone(),
                    hr_bpm: Trajectory { knots: hr_knots },
                    rr_bpm: Trajectory::constant(rr),
                    target_r,
                    noise_snr_db: self.noise_snr_db,
                    motion_depth: self.motion_depth,
                    notch_amp: self.notch_amp,
                    sbp: r.random_range(105.0..=130.0),
                    dbp: r.random_range(65.0..=85.0),
                    seed: subject_seed,
                    ..SynthSpec::default()
                }
            })
            .collect()
    }
}

/// Frequency of the largest direct-DFT magnitude of the mean-removed signal
/// on a 0.001 Hz grid over `[low_hz, high_hz]`.
pub fn brute_force_dft_argmax(x: &[f64], rate_hz: f64, low_hz: f64, high_hz: f64) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let steps = ((high_hz - low_hz) / 0.001).round() as usize;
    let mut best = (low_hz, f64::NEG_INFINITY);
    for s in 0..=steps {
        let f = low_hz + s as f64 * 0.001;
        let w = 2.0 * PI * f / rate_hz;
        let (step_re, step_im) = (w.cos(), -w.sin());
        let (mut rot_re, mut rot_im) = (1.0, 0.0);
        let (mut re, mut im) = (0.0, 0.0);
        for v in x {
            let d = v - mean;
            re += d * rot_re;
            im += d * rot_im;
            let nr = rot_re * step_re - rot_im * step_im;
            rot_im = rot_re * step_im + rot_im * step_re;
            rot_re = nr;
        }
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (f, mag);
        }
    }
    best.0
}
