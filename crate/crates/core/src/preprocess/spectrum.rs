//! Welch power spectral density.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::SignalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    /// Averaged, overlapping segments.
    #[default]
    Welch,
    /// One Hann-windowed segment spanning the whole input.
    Periodogram,
}

/// Analysis parameters for [`welch_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralParams {
    pub segment_s: f64,
    pub overlap: f64,
    /// Each segment is zero-padded to `zero_pad * segment length` points.
    pub zero_pad: usize,
    pub mode: SpectralMode,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            segment_s: 10.0,
            overlap: 0.5,
            zero_pad: 4,
            mode: SpectralMode::Welch,
        }
    }
}

/// One-sided power spectral density in units²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub segment_s: f64,
    pub overlap_fraction: f64,
    pub window_fn: WindowFn,
    pub segments: usize,
}

impl SpectrumEstimate {
    /// Grid spacing in Hz.
    pub fn resolution_hz(&self) -> f64 {
        self.freqs_hz.get(1).map_or(0.0, |f| f - self.freqs_hz[0])
    }

    /// Integrated power, Σ P·Δf.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution_hz()
    }

    /// Integrated power over `low_hz <= f < high_hz`.
    pub fn band_power(&self, low_hz: f64, high_hz: f64) -> f64 {
        let df = self.resolution_hz();
        self.freqs_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= low_hz && **f < high_hz)
            .map(|(_, p)| p * df)
            .sum()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Averaged modified periodogram: Hann-windowed, mean-detrended segments,
/// density scaling so that `total_power()` approximates the variance.
pub fn welch_psd(x: &[f64], rate_hz: f64, params: &SpectralParams) -> Result<SpectrumEstimate, SignalError> {
    let (nperseg, step) = match params.mode {
        SpectralMode::Welch => {
            let nperseg = (params.segment_s * rate_hz).round() as usize;
            if nperseg > x.len() {
                return Err(SignalError::SegmentTooLong {
                    needed: nperseg,
                    got: x.len(),
                });
            }
            let overlap = (params.overlap * nperseg as f64).round() as usize;
            (nperseg, (nperseg - overlap.min(nperseg - 1)).max(1))
        }
        SpectralMode::Periodogram => (x.len(), x.len().max(1)),
    };
    if nperseg < 2 {
        return Err(SignalError::TooShort { needed: 2, got: nperseg });
    }
    let nfft = {
        let n = nperseg * params.zero_pad.max(1);
        n + n % 2
    };
    let window = hann(nperseg);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (rate_hz * win_energy);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let bins = nfft / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + nperseg <= x.len() {
        let seg = &x[start..start + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < nperseg {
                Complex64::new((seg[i] - mean) * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr() * scale;
            if k != 0 && k != nfft / 2 {
                p *= 2.0;
            }
            *a += p;
        }
        segments += 1;
        start += step;
    }
    let power = acc.into_iter().map(|p| p / segments as f64).collect();
    let freqs_hz = (0..bins).map(|k| k as f64 * rate_hz / nfft as f64).collect();
    Ok(SpectrumEstimate {
        freqs_hz,
        power,
        segment_s: nperseg as f64 / rate_hz,
        overlap_fraction: 1.0 - step as f64 / nperseg as f64,
        window_fn: WindowFn::Hann,
        segments,
    })
}
