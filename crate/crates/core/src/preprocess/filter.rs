//! Zero-phase Butterworth band-pass filtering.
//!
//! The design follows the classic analog-prototype route: Butterworth
//! low-pass poles, low-pass to band-pass substitution on pre-warped edges,
//! bilinear transform, then grouping into second-order sections. Filtering is
//! applied forward and backward with odd-extension padding and steady-state
//! initial conditions, which cancels phase distortion.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SignalError;

/// Band-pass specification. A spec of order `n` yields `n` second-order
/// sections (2n poles); applied forward-backward the magnitude response is
/// squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    4
}

impl FilterSpec {
    pub const fn new(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self {
            low_hz,
            high_hz,
            order,
        }
    }

    /// Cardiac band, 0.5-3 Hz.
    pub const fn cardiac() -> Self {
        Self::new(0.5, 3.0, 4)
    }

    /// Respiratory band, 0.1-0.5 Hz.
    pub const fn respiratory() -> Self {
        Self::new(0.1, 0.5, 4)
    }

    pub fn validate(&self, rate_hz: f64) -> Result<(), SignalError> {
        if self.order == 0 {
            return Err(SignalError::InvalidFilter("order must be at least 1".into()));
        }
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz) {
            return Err(SignalError::InvalidFilter(format!(
                "need 0 < low ({}) < high ({})",
                self.low_hz, self.high_hz
            )));
        }
        let nyquist = rate_hz / 2.0;
        if self.high_hz >= nyquist * 0.999 {
            return Err(SignalError::UnstableDesign(format!(
                "upper edge {} Hz too close to Nyquist {} Hz",
                self.high_hz, nyquist
            )));
        }
        Ok(())
    }
}

/// One biquad in transposed direct form II, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// State that makes the section's output constant for a unit step.
    fn step_state(&self) -> ([f64; 2], f64) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * gain;
        let z1 = b1 - a1 * gain + z2;
        ([z1, z2], gain)
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// A designed band-pass filter in second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPass {
    sections: Vec<Biquad>,
    pad_len: usize,
}

impl BandPass {
    pub fn design(spec: &FilterSpec, rate_hz: f64) -> Result<Self, SignalError> {
        spec.validate(rate_hz)?;
        let n = spec.order;
        let fs2 = 2.0 * rate_hz;
        let w_lo = fs2 * (PI * spec.low_hz / rate_hz).tan();
        let w_hi = fs2 * (PI * spec.high_hz / rate_hz).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let mut analog_poles = Vec::with_capacity(2 * n);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0_sq).sqrt();
            analog_poles.push((pb + disc) / 2.0);
            analog_poles.push((pb - disc) / 2.0);
        }

        // n zeros at s = 0 map to z = 1; n zeros at infinity map to z = -1.
        let mut gain = Complex64::new(bw.powi(n as i32), 0.0) * fs2.powi(n as i32);
        let mut poles = Vec::with_capacity(2 * n);
        for p in &analog_poles {
            gain /= fs2 - p;
            poles.push((fs2 + p) / (fs2 - p));
        }
        let gain = gain.re;

        for p in &poles {
            if p.norm() >= 1.0 - 1e-12 {
                return Err(SignalError::UnstableDesign(format!("pole {p} on or outside unit circle")));
            }
        }

        let sections = pair_sections(&poles, gain)?;
        let pad_len = (3 * (2 * sections.len() + 1)).max((rate_hz / spec.low_hz).ceil() as usize);
        Ok(Self { sections, pad_len })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Single causal pass starting from rest.
    pub fn filter_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    fn pass_with_steady_state(&self, y: &mut [f64]) {
        let Some(&first) = y.first() else { return };
        let mut level = first;
        for s in &self.sections {
            let (z, g) = s.step_state();
            s.run(y, [z[0] * level, z[1] * level]);
            level *= g;
        }
    }

    /// Forward-backward filtering. Output has the input's length.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>, SignalError> {
        let min_len = 3 * self.sections.len();
        if x.len() <= min_len {
            return Err(SignalError::TooShort {
                needed: min_len,
                got: x.len(),
            });
        }
        let n = x.len();
        let pad = self.pad_len.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.pass_with_steady_state(&mut ext);
        ext.reverse();
        self.pass_with_steady_state(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }

    /// Magnitude of one causal pass at frequency `f_hz`.
    pub fn magnitude(&self, f_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + z1 * s.b[1] + z2 * s.b[2];
                let den = 1.0 + z1 * s.a[0] + z2 * s.a[1];
                (num / den).norm()
            })
            .product()
    }
}

fn pair_sections(poles: &[Complex64], gain: f64) -> Result<Vec<Biquad>, SignalError> {
    const EPS: f64 = 1e-10;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > EPS).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= EPS).map(|p| p.re).collect();
    let lower = poles.iter().filter(|p| p.im < -EPS).count();
    if lower != complex.len() || !real.len().is_multiple_of(2) {
        return Err(SignalError::UnstableDesign("poles do not form conjugate pairs".into()));
    }
    // Sections closest to the unit circle go last.
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut dens: Vec<[f64; 2]> = real.chunks(2).map(|r| [-(r[0] + r[1]), r[0] * r[1]]).collect();
    dens.extend(complex.iter().map(|p| [-2.0 * p.re, p.norm_sqr()]));

    Ok(dens
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let k = if i == 0 { gain } else { 1.0 };
            Biquad {
                b: [k, 0.0, -k],
                a,
            }
        })
        .collect())
}

/// Zero-phase band-pass of `x` sampled at `rate_hz`.
pub fn bandpass(x: &[f64], rate_hz: f64, spec: &FilterSpec) -> Result<Vec<f64>, SignalError> {
    if x.len() <= 3 * spec.order {
        return Err(SignalError::TooShort {
            needed: 3 * spec.order,
            got: x.len(),
        });
    }
    BandPass::design(spec, rate_hz)?.filtfilt(x)
}
