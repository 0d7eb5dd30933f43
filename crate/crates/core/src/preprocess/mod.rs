//! Windowed-signal preprocessing: standardization, band-pass filtering,
//! differentiation-normalization and spectral analysis, composable as an
//! ordered plan.

mod filter;
mod spectrum;

use serde::{Deserialize, Serialize};

pub use filter::{bandpass, BandPass, Biquad, FilterSpec};
pub use spectrum::{welch_psd, SpectralMode, SpectralParams, SpectrumEstimate, WindowFn};

use crate::error::SignalError;
use crate::signal::{Channel, SignalWindow};

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Zero-mean, unit population variance. Constant input maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let m = mean(x);
    let s = std_dev(x);
    if s <= 1e-12 * m.abs().max(1.0) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - m) / s).collect()
}

/// First difference followed by standardization; output is one sample
/// shorter than the input.
pub fn diffnorm(x: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    standardize(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Standardize,
    Filter(FilterSpec),
    Diffnorm,
    Spectral(SpectralParams),
}

/// Ordered preprocessing steps. At most one `Spectral`, and only last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Step>", into = "Vec<Step>")]
pub struct PreprocessPlan {
    steps: Vec<Step>,
}

impl PreprocessPlan {
    pub fn new(steps: Vec<Step>) -> Result<Self, SignalError> {
        let spectral = steps.iter().filter(|s| matches!(s, Step::Spectral(_))).count();
        if spectral > 1 {
            return Err(SignalError::InvalidPlan("more than one spectral step".into()));
        }
        if spectral == 1 && !matches!(steps.last(), Some(Step::Spectral(_))) {
            return Err(SignalError::InvalidPlan("spectral step must be last".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn ends_with_spectral(&self) -> bool {
        matches!(self.steps.last(), Some(Step::Spectral(_)))
    }

    /// The plan without its trailing spectral step, plus that step's
    /// parameters when present.
    pub fn split_spectral(&self) -> (PreprocessPlan, Option<SpectralParams>) {
        match self.steps.last() {
            Some(Step::Spectral(p)) => (
                PreprocessPlan {
                    steps: self.steps[..self.steps.len() - 1].to_vec(),
                },
                Some(*p),
            ),
            _ => (self.clone(), None),
        }
    }

    /// Standardize then filter; the default time-domain chain.
    pub fn filtered(spec: FilterSpec) -> Self {
        Self {
            steps: vec![Step::Standardize, Step::Filter(spec)],
        }
    }

    /// Standardize, filter, then Welch spectrum.
    pub fn spectral(spec: FilterSpec, params: SpectralParams) -> Self {
        Self {
            steps: vec![Step::Standardize, Step::Filter(spec), Step::Spectral(params)],
        }
    }

    /// Applies the plan to a bare sample vector.
    pub fn apply(&self, x: &[f64], rate_hz: f64) -> Result<Processed, SignalError> {
        let mut cur = x.to_vec();
        for step in &self.steps {
            match step {
                Step::Standardize => {
                    if cur.len() < 2 {
                        return Err(SignalError::TooShort { needed: 1, got: cur.len() });
                    }
                    cur = standardize(&cur);
                }
                Step::Filter(spec) => cur = bandpass(&cur, rate_hz, spec)?,
                Step::Diffnorm => {
                    if cur.len() < 3 {
                        return Err(SignalError::TooShort { needed: 2, got: cur.len() });
                    }
                    cur = diffnorm(&cur);
                }
                Step::Spectral(p) => return Ok(Processed::Spectrum(welch_psd(&cur, rate_hz, p)?)),
            }
        }
        Ok(Processed::Samples(cur))
    }
}

impl TryFrom<Vec<Step>> for PreprocessPlan {
    type Error = SignalError;

    fn try_from(steps: Vec<Step>) -> Result<Self, Self::Error> {
        Self::new(steps)
    }
}

impl From<PreprocessPlan> for Vec<Step> {
    fn from(p: PreprocessPlan) -> Self {
        p.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Processed {
    Samples(Vec<f64>),
    Spectrum(SpectrumEstimate),
}

impl Processed {
    pub fn into_samples(self) -> Option<Vec<f64>> {
        match self {
            Processed::Samples(s) => Some(s),
            Processed::Spectrum(_) => None,
        }
    }

    pub fn into_spectrum(self) -> Option<SpectrumEstimate> {
        match self {
            Processed::Spectrum(s) => Some(s),
            Processed::Samples(_) => None,
        }
    }
}

/// Runs `plan` over one channel of a window.
pub fn run_plan(w: &SignalWindow, channel: Channel, plan: &PreprocessPlan) -> Result<Processed, SignalError> {
    plan.apply(w.require(channel)?, w.rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standardize_three_points() {
        let z = standardize(&[1.0, 2.0, 3.0]);
        let e = 1.5f64.sqrt();
        for (a, b) in z.iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn standardize_constant_is_zeros() {
        assert_eq!(standardize(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
    }

    #[test]
    fn diffnorm_ramp_is_zeros() {
        assert_eq!(diffnorm(&[0.0, 1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn diffnorm_alternating() {
        let d = diffnorm(&[0.0, 1.0, 0.0, 1.0]);
        let s = 2f64.sqrt();
        let expect = [1.0 / s, -s, 1.0 / s];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
        assert!(mean(&d).abs() < 1e-12);
        assert!((std_dev(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_rejects_spectral_not_last() {
        let steps = vec![Step::Spectral(SpectralParams::default()), Step::Standardize];
        assert!(PreprocessPlan::new(steps).is_err());
        let two = vec![
            Step::Spectral(SpectralParams::default()),
            Step::Spectral(SpectralParams::default()),
        ];
        assert!(PreprocessPlan::new(two).is_err());
    }

    #[test]
    fn plan_serde_shape() {
        let plan = PreprocessPlan::spectral(FilterSpec::cardiac(), SpectralParams::default());
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.starts_with(r#"["standardize",{"filter":{"low_hz":0.5"#), "{json}");
        let back: PreprocessPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
        let bad = r#"[{"spectral":{}},"standardize"]"#;
        assert!(serde_json::from_str::<PreprocessPlan>(bad).is_err());
    }

    #[test]
    fn plan_lengths() {
        let x: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.09).sin()).collect();
        let p = PreprocessPlan::filtered(FilterSpec::cardiac());
        assert_eq!(p.apply(&x, 100.0).unwrap().into_samples().unwrap().len(), 3000);
        let mut steps = p.steps().to_vec();
        steps.push(Step::Diffnorm);
        let p = PreprocessPlan::new(steps).unwrap();
        assert_eq!(p.apply(&x, 100.0).unwrap().into_samples().unwrap().len(), 2999);
    }

    fn signal_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 8..200)
    }

    proptest! {
        #[test]
        fn standardize_moments(x in signal_strategy()) {
            prop_assume!(std_dev(&x) > 1e-6);
            let z = standardize(&x);
            prop_assert!(mean(&z).abs() < 1e-9);
            prop_assert!((std_dev(&z) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn standardize_idempotent(x in signal_strategy()) {
            let z = standardize(&x);
            let zz = standardize(&z);
            for (a, b) in z.iter().zip(&zz) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn diffnorm_affine_invariant(x in signal_strategy(), a in 0.01f64..50.0, b in -1e3f64..1e3) {
            let d = x.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
            prop_assume!(std_dev(&d) > 1e-3);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let p = diffnorm(&x);
            let q = diffnorm(&y);
            for (u, v) in p.iter().zip(&q) {
                prop_assert!((u - v).abs() < 1e-6, "{} vs {}", u, v);
            }
        }
    }
}
