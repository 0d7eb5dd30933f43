//! Physics-based vital-sign estimators: time-domain peak counting,
//! spectral peak picking and the ratio-of-ratios SpO2 method.

use serde::{Deserialize, Serialize};

use crate::error::SignalError;
use crate::preprocess::{bandpass, mean, std_dev, FilterSpec, SpectrumEstimate};
use crate::signal::{RingType, VitalKind};

/// Physiological rate band with its matching band-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBand {
    pub kind: VitalKind,
    pub min_per_min: f64,
    pub max_per_min: f64,
    pub filter: FilterSpec,
}

impl RateBand {
    /// 30-180 beats/min, 0.5-3 Hz filter.
    pub const fn heart() -> Self {
        Self {
            kind: VitalKind::Hr,
            min_per_min: 30.0,
            max_per_min: 180.0,
            filter: FilterSpec::cardiac(),
        }
    }

    /// 6-30 breaths/min, 0.1-0.5 Hz filter.
    pub const fn respiratory() -> Self {
        Self {
            kind: VitalKind::Rr,
            min_per_min: 6.0,
            max_per_min: 30.0,
            filter: FilterSpec::respiratory(),
        }
    }

    pub fn for_kind(kind: VitalKind) -> Option<Self> {
        match kind {
            VitalKind::Hr => Some(Self::heart()),
            VitalKind::Rr => Some(Self::respiratory()),
            _ => None,
        }
    }

    pub fn low_hz(&self) -> f64 {
        self.min_per_min / 60.0
    }

    pub fn high_hz(&self) -> f64 {
        self.max_per_min / 60.0
    }

    pub fn contains(&self, per_min: f64) -> bool {
        per_min >= self.min_per_min && per_min <= self.max_per_min
    }

    /// Minimum spacing between accepted peaks, in samples.
    pub fn min_peak_distance(&self, rate_hz: f64) -> usize {
        ((60.0 / self.max_per_min) * rate_hz).floor().max(1.0) as usize
    }
}

/// Prominence threshold relative to the signal's standard deviation.
pub const PROMINENCE_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub per_min: f64,
    pub out_of_band: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPeak {
    pub f_peak: f64,
    pub power: f64,
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Keeps the tallest peaks, discarding any lower peak closer than
/// `distance` samples to a kept one.
fn select_by_distance(x: &[f64], peaks: &[usize], distance: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; peaks.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        let mut j = i;
        while j > 0 && peaks[i] - peaks[j - 1] < distance {
            keep[j - 1] = false;
            j -= 1;
        }
        let mut j = i + 1;
        while j < peaks.len() && peaks[j] - peaks[i] < distance {
            keep[j] = false;
            j += 1;
        }
    }
    peaks
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

/// Height of a peak above the higher of its two bases, where each base is
/// the minimum reached before the signal climbs above the peak or ends.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peak indices of an already band-passed signal, strictly increasing.
pub fn detect_peaks(x: &[f64], rate_hz: f64, band: &RateBand) -> Result<Vec<usize>, SignalError> {
    if x.len() < 3 {
        return Err(SignalError::TooShort { needed: 2, got: x.len() });
    }
    let sd = std_dev(x);
    if sd <= 1e-12 * mean(x).abs().max(1.0) {
        return Err(SignalError::DegenerateSignal("zero variance".into()));
    }
    let candidates = local_maxima(x);
    let spaced = select_by_distance(x, &candidates, band.min_peak_distance(rate_hz));
    let threshold = PROMINENCE_FRACTION * sd;
    Ok(spaced.into_iter().filter(|&p| prominence(x, p) >= threshold).collect())
}

/// `60 × count / duration`, flagged when outside the band limits.
pub fn rate_from_peaks(peak_count: usize, duration_s: f64, band: &RateBand) -> Rate {
    let per_min = 60.0 * peak_count as f64 / duration_s;
    Rate {
        per_min,
        out_of_band: !band.contains(per_min),
    }
}

/// Strongest in-band spectral bin, refined by a parabola through the log
/// power of the bin and its neighbours.
pub fn spectrum_peak(spec: &SpectrumEstimate, band: &RateBand) -> Result<SpectrumPeak, SignalError> {
    let (lo, hi) = (band.low_hz(), band.high_hz());
    let best = spec
        .freqs_hz
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= lo && **f <= hi)
        .max_by(|a, b| spec.power[a.0].total_cmp(&spec.power[b.0]).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .ok_or(SignalError::EmptyBand { low_hz: lo, high_hz: hi })?;

    let df = spec.resolution_hz();
    let mut f = spec.freqs_hz[best];
    if best > 0 && best + 1 < spec.power.len() {
        let (a, b, c) = (spec.power[best - 1], spec.power[best], spec.power[best + 1]);
        let (a, b, c) = if a > 0.0 && b > 0.0 && c > 0.0 {
            (a.ln(), b.ln(), c.ln())
        } else {
            (a, b, c)
        };
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            f += delta * df;
        }
    }
    Ok(SpectrumPeak {
        f_peak: f.clamp(lo, hi),
        power: spec.power[best],
    })
}

/// `60 × f_peak` with `f_peak` restricted to the band.
pub fn rate_from_spectrum(spec: &SpectrumEstimate, band: &RateBand) -> Result<Rate, SignalError> {
    let peak = spectrum_peak(spec, band)?;
    let per_min = 60.0 * peak.f_peak;
    Ok(Rate {
        per_min,
        out_of_band: !band.contains(per_min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcDc {
    pub ac: f64,
    pub dc: f64,
}

/// DC is the raw mean; AC is the RMS of the cardiac-band component scaled by
/// √2, i.e. the amplitude of an equivalent sinusoid.
pub fn ac_dc(x: &[f64], rate_hz: f64, cardiac: &FilterSpec) -> Result<AcDc, SignalError> {
    if x.is_empty() {
        return Err(SignalError::TooShort { needed: 0, got: 0 });
    }
    let dc = mean(x);
    if dc.is_nan() || dc <= 0.0 {
        return Err(SignalError::NonPositiveDc { dc });
    }
    let filtered = bandpass(x, rate_hz, cardiac)?;
    let rms = (filtered.iter().map(|v| v * v).sum::<f64>() / filtered.len() as f64).sqrt();
    Ok(AcDc {
        ac: rms * std::f64::consts::SQRT_2,
        dc,
    })
}

/// Ratio of ratios `(AC_red/DC_red) / (AC_ir/DC_ir)` from raw channels.
pub fn spo2_ratio(ir: &[f64], red: &[f64], rate_hz: f64) -> Result<f64, SignalError> {
    if ir.len() != red.len() {
        return Err(SignalError::InvalidWindow(format!(
            "ir has {} samples, red has {}",
            ir.len(),
            red.len()
        )));
    }
    let cardiac = FilterSpec::cardiac();
    let ir = ac_dc(ir, rate_hz, &cardiac)?;
    let red = ac_dc(red, rate_hz, &cardiac)?;
    let tiny = |v: AcDc| v.ac <= 1e-12 * v.dc;
    if tiny(ir) || tiny(red) {
        return Err(SignalError::DegenerateSignal("no pulsatile component".into()));
    }
    Ok((red.ac / red.dc) / (ir.ac / ir.dc))
}

/// Linear calibration `SpO2 = a − b·R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpO2Calibration {
    pub a: f64,
    pub b: f64,
}

impl SpO2Calibration {
    pub const REFLECTIVE: Self = Self { a: 99.0, b: 6.0 };
    pub const TRANSMISSIVE: Self = Self { a: 87.0, b: -6.0 };

    pub fn for_ring(ring: RingType) -> Self {
        match ring {
            RingType::Reflective => Self::REFLECTIVE,
            RingType::Transmissive => Self::TRANSMISSIVE,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && (80.0..=110.0).contains(&self.a)
    }

    /// Inverse mapping, SpO2 to R.
    pub fn ratio_for(&self, spo2: f64) -> f64 {
        (self.a - spo2) / self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spo2 {
    pub percent: f64,
    pub out_of_band: bool,
}

pub fn spo2_estimate(r: f64, cal: &SpO2Calibration) -> Spo2 {
    let percent = cal.a - cal.b * r;
    Spo2 {
        percent,
        out_of_band: !(70.0..=100.0).contains(&percent),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{welch_psd, SpectralParams};
    use std::f64::consts::PI;

    const FS: f64 = 100.0;

    fn sine(f: f64, secs: f64, phase: f64) -> Vec<f64> {
        (0..(secs * FS) as usize)
            .map(|i| (2.0 * PI * f * i as f64 / FS + phase).sin())
            .collect()
    }

    #[test]
    fn sine_peak_count_is_phase_dependent() {
        for k in 0..8 {
            let x = sine(1.25, 30.0, k as f64 * PI / 4.0);
            let p = detect_peaks(&x, FS, &RateBand::heart()).unwrap();
            assert!(p.len() == 37 || p.len() == 38, "phase {k}: {}", p.len());
            assert!(p.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn constant_signal_is_degenerate() {
        assert!(matches!(
            detect_peaks(&[4.0; 100], FS, &RateBand::heart()),
            Err(SignalError::DegenerateSignal(_))
        ));
    }

    #[test]
    fn low_prominence_bumps_rejected() {
        // Bumps far enough apart to survive the distance rule.
        let mut x = sine(1.0, 10.0, 0.0);
        for (i, v) in x.iter_mut().enumerate() {
            let phase = (i % 100) as f64 / 100.0;
            if (0.64..0.7).contains(&phase) {
                *v += 0.1 * (PI * (phase - 0.64) / 0.06).sin();
            }
        }
        let p = detect_peaks(&x, FS, &RateBand::heart()).unwrap();
        assert_eq!(p.len(), 10);
    }

    #[test]
    fn plateau_peak_takes_middle() {
        let x = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0, -1.0, 0.0, -1.0];
        assert_eq!(local_maxima(&x), vec![3, 8]);
    }

    #[test]
    fn eq1_arithmetic() {
        let hr = RateBand::heart();
        assert_eq!(rate_from_peaks(40, 30.0, &hr), Rate { per_min: 80.0, out_of_band: false });
        assert_eq!(rate_from_peaks(0, 30.0, &hr), Rate { per_min: 0.0, out_of_band: true });
        let rr = rate_from_peaks(9, 30.0, &RateBand::respiratory());
        assert_eq!(rr.per_min, 18.0);
        assert!(!rr.out_of_band);
    }

    #[test]
    fn spectrum_rate_of_tone() {
        let s = welch_psd(&sine(1.5, 30.0, 0.0), FS, &SpectralParams::default()).unwrap();
        let r = rate_from_spectrum(&s, &RateBand::heart()).unwrap();
        assert!((r.per_min - 90.0).abs() <= 1.0, "{}", r.per_min);
        let s = welch_psd(&sine(0.3, 30.0, 0.4), FS, &SpectralParams::default()).unwrap();
        let r = rate_from_spectrum(&s, &RateBand::respiratory()).unwrap();
        assert!((r.per_min - 18.0).abs() <= 0.6, "{}", r.per_min);
    }

    #[test]
    fn stronger_tone_wins() {
        // Power 1.0 at 1 Hz and 0.5 at 2 Hz means amplitudes 1 and 1/√2.
        let x: Vec<f64> = sine(1.0, 30.0, 0.0)
            .iter()
            .zip(sine(2.0, 30.0, 0.3))
            .map(|(a, b)| a + b * (0.5f64).sqrt())
            .collect();
        let s = welch_psd(&x, FS, &SpectralParams::default()).unwrap();
        let r = rate_from_spectrum(&s, &RateBand::heart()).unwrap();
        assert!((r.per_min - 60.0).abs() <= 1.0, "{}", r.per_min);
    }

    #[test]
    fn empty_band() {
        let s = SpectrumEstimate {
            freqs_hz: vec![0.0, 5.0, 10.0],
            power: vec![1.0, 1.0, 1.0],
            segment_s: 1.0,
            overlap_fraction: 0.0,
            window_fn: crate::preprocess::WindowFn::Hann,
            segments: 1,
        };
        assert!(matches!(
            rate_from_spectrum(&s, &RateBand::heart()),
            Err(SignalError::EmptyBand { .. })
        ));
    }

    #[test]
    fn ac_dc_of_constructed_tone() {
        let x: Vec<f64> = sine(1.5, 30.0, 0.0).iter().map(|v| 1000.0 + 10.0 * v).collect();
        let v = ac_dc(&x, FS, &FilterSpec::cardiac()).unwrap();
        assert!((v.dc - 1000.0).abs() <= 0.1);
        assert!((v.ac - 10.0).abs() <= 0.5, "{}", v.ac);
    }

    #[test]
    fn ac_dc_constant_and_negative() {
        let v = ac_dc(&[500.0; 3000], FS, &FilterSpec::cardiac()).unwrap();
        assert!(v.ac.abs() < 1e-9);
        assert_eq!(v.dc, 500.0);
        let neg: Vec<f64> = sine(1.5, 30.0, 0.0).iter().map(|v| v - 5.0).collect();
        assert!(matches!(
            ac_dc(&neg, FS, &FilterSpec::cardiac()),
            Err(SignalError::NonPositiveDc { .. })
        ));
    }

    #[test]
    fn ratio_symmetry_and_scaling() {
        let s = sine(1.2, 30.0, 0.2);
        let ir: Vec<f64> = s.iter().map(|v| 2000.0 + 20.0 * v).collect();
        assert!((spo2_ratio(&ir, &ir, FS).unwrap() - 1.0).abs() < 1e-6);
        let red: Vec<f64> = s.iter().map(|v| 2000.0 + 40.0 * v).collect();
        assert!((spo2_ratio(&ir, &red, FS).unwrap() - 2.0).abs() < 0.01);
        let flat = vec![2000.0; ir.len()];
        assert!(matches!(
            spo2_ratio(&ir, &flat, FS),
            Err(SignalError::DegenerateSignal(_))
        ));
    }

    #[test]
    fn ratio_gain_invariance() {
        let s = sine(1.1, 30.0, 0.0);
        let ir: Vec<f64> = s.iter().map(|v| 3000.0 + 30.0 * v).collect();
        let red: Vec<f64> = s.iter().map(|v| 1500.0 + 12.0 * v).collect();
        let base = spo2_ratio(&ir, &red, FS).unwrap();
        for (k1, k2) in [(2.0, 0.5), (0.01, 300.0), (7.0, 7.0)] {
            let a: Vec<f64> = ir.iter().map(|v| v * k1).collect();
            let b: Vec<f64> = red.iter().map(|v| v * k2).collect();
            assert!((spo2_ratio(&a, &b, FS).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn eq5_arithmetic() {
        assert_eq!(spo2_estimate(1.0, &SpO2Calibration::REFLECTIVE).percent, 93.0);
        assert_eq!(spo2_estimate(0.5, &SpO2Calibration::REFLECTIVE).percent, 96.0);
        assert_eq!(spo2_estimate(1.0, &SpO2Calibration::TRANSMISSIVE).percent, 93.0);
        assert!(spo2_estimate(5.0, &SpO2Calibration::REFLECTIVE).out_of_band);
    }

    #[test]
    fn calibration_monotonicity() {
        let rs: Vec<f64> = (1..40).map(|i| i as f64 * 0.05).collect();
        let refl: Vec<f64> = rs.iter().map(|r| spo2_estimate(*r, &SpO2Calibration::REFLECTIVE).percent).collect();
        let trans: Vec<f64> = rs.iter().map(|r| spo2_estimate(*r, &SpO2Calibration::TRANSMISSIVE).percent).collect();
        assert!(refl.windows(2).all(|w| w[1] < w[0]));
        assert!(trans.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn clean_sine_rate_sweep() {
        let band = RateBand::heart();
        let filter = FilterSpec::cardiac();
        let mut f = 0.5;
        while f <= 3.0 + 1e-9 {
            let x = bandpass(&sine(f, 30.0, 0.1), FS, &filter).unwrap();
            let p = detect_peaks(&x, FS, &band).unwrap();
            let r = rate_from_peaks(p.len(), 30.0, &band);
            assert!((r.per_min - 60.0 * f).abs() <= 2.0 + 1e-9, "f={f}: {}", r.per_min);
            f += 0.05;
        }
    }
}
