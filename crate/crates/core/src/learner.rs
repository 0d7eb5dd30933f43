//! Ridge regression on spectral window features, and least-squares SpO2
//! calibration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LearnError, SignalError};
use crate::estimators::{ac_dc, SpO2Calibration};
use crate::ingest::LabeledPair;
use crate::preprocess::{welch_psd, FilterSpec, PreprocessPlan, SpectralParams, Step};
use crate::signal::{Channel, SignalWindow, VitalKind};

pub const FEATURE_BINS: usize = 20;
pub const FEATURE_LOW_HZ: f64 = 0.1;
pub const FEATURE_HIGH_HZ: f64 = 5.0;
pub const ACC_ENERGY_BAND: (f64, f64) = (0.5, 5.0);

/// Penalties tried by [`train_with_selection`] when none are configured.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

const LOG_FLOOR: f64 = 1e-12;

/// Ordered feature names with a content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    names: Vec<String>,
    hash: String,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Self {
        let mut h = Sha256::new();
        for n in &names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self { names, hash }
    }

    /// Schema produced by [`featurize`] for these channels, in order.
    pub fn for_channels(channels: &[Channel]) -> Self {
        let width = (FEATURE_HIGH_HZ - FEATURE_LOW_HZ) / FEATURE_BINS as f64;
        let mut names = Vec::new();
        for ch in channels {
            for i in 0..FEATURE_BINS {
                let lo = FEATURE_LOW_HZ + i as f64 * width;
                names.push(format!("{ch}:logpow:{lo:.3}-{:.3}", lo + width));
            }
            if ch.is_ppg() {
                names.push(format!("{ch}:ac_dc"));
            }
        }
        if channels.iter().any(|c| c.is_acc()) {
            names.push(format!("acc:log_energy:{}-{}", ACC_ENERGY_BAND.0, ACC_ENERGY_BAND.1));
        }
        Self::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Arc<FeatureSchema>,
}

/// Default feature plan: standardize, then Welch spectrum.
pub fn default_feature_plan() -> PreprocessPlan {
    PreprocessPlan::new(vec![Step::Standardize, Step::Spectral(SpectralParams::default())])
        .expect("valid plan")
}

/// Log band-power bins of each channel after `plan`, AC/DC of each PPG
/// channel on the raw samples, and the log ACC energy in 0.5-5 Hz summed over
/// the ACC channels.
///
/// A plan that stops before a spectral step is followed by a default Welch
/// spectrum.
pub fn featurize(w: &SignalWindow, channels: &[Channel], plan: &PreprocessPlan) -> Result<FeatureVector, SignalError> {
    let schema = Arc::new(FeatureSchema::for_channels(channels));
    featurize_with(w, channels, plan, schema)
}

fn featurize_with(
    w: &SignalWindow,
    channels: &[Channel],
    plan: &PreprocessPlan,
    schema: Arc<FeatureSchema>,
) -> Result<FeatureVector, SignalError> {
    let (pre, params) = plan.split_spectral();
    let params = params.unwrap_or_default();
    let rate = w.rate_hz();
    let width = (FEATURE_HIGH_HZ - FEATURE_LOW_HZ) / FEATURE_BINS as f64;
    let mut values = Vec::with_capacity(schema.len());
    let mut acc_energy = None;
    for &ch in channels {
        let raw = w.require(ch)?;
        let x = pre
            .apply(raw, rate)?
            .into_samples()
            .expect("plan without spectral step yields samples");
        let spec = welch_psd(&x, rate, &params)?;
        for i in 0..FEATURE_BINS {
            let lo = FEATURE_LOW_HZ + i as f64 * width;
            values.push((spec.band_power(lo, lo + width) + LOG_FLOOR).ln());
        }
        if ch.is_ppg() {
            let v = ac_dc(raw, rate, &FilterSpec::cardiac())?;
            values.push(v.ac / v.dc);
        }
        if ch.is_acc() {
            let spec = welch_psd(raw, rate, &params)?;
            *acc_energy.get_or_insert(0.0) += spec.band_power(ACC_ENERGY_BAND.0, ACC_ENERGY_BAND.1);
        }
    }
    if let Some(e) = acc_energy {
        values.push((e + LOG_FLOOR).ln());
    }
    debug_assert_eq!(values.len(), schema.len());
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(SignalError::DegenerateSignal(format!("non-finite feature {}", schema.names[i])));
    }
    Ok(FeatureVector { values, schema })
}

/// Feature matrix with references for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub target: VitalKind,
    pub schema: Arc<FeatureSchema>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(target: VitalKind, schema: Arc<FeatureSchema>) -> Self {
        Self {
            target,
            schema,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    /// Featurizes every pair; pairs whose features fail are returned by index.
    pub fn from_pairs(
        target: VitalKind,
        pairs: &[LabeledPair],
        channels: &[Channel],
        plan: &PreprocessPlan,
    ) -> (Self, Vec<(usize, SignalError)>) {
        let mut d = Self::new(target, Arc::new(FeatureSchema::for_channels(channels)));
        let mut failed = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            match featurize_with(&p.window, channels, plan, d.schema.clone()) {
                Ok(f) => d.push(f.values, p.reference),
                Err(e) => failed.push((i, e)),
            }
        }
        (d, failed)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        assert_eq!(x.len(), self.schema.len(), "row width");
        self.x.push(x);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            target: self.target,
            schema: self.schema.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Ridge model over column-standardized features with an unpenalized
/// intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub target: VitalKind,
    pub lambda: f64,
    pub schema: Vec<String>,
    pub schema_hash: String,
    /// Training-set column means.
    pub means: Vec<f64>,
    /// Training-set column standard deviations (1 for constant columns).
    pub scales: Vec<f64>,
    /// Weights on standardized columns.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub n_train: usize,
}

impl LinearModel {
    /// Weights in the original feature units.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scales).map(|(w, s)| w / s).collect()
    }

    /// Intercept in the original feature units.
    pub fn raw_intercept(&self) -> f64 {
        self.intercept
            - self
                .raw_weights()
                .iter()
                .zip(&self.means)
                .map(|(w, m)| w * m)
                .sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>()
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<f64, LearnError> {
        if f.schema.hash() != self.schema_hash {
            return Err(LearnError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found: f.schema.hash().to_string(),
            });
        }
        Ok(self.predict_row(&f.values))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Closed-form ridge fit minimizing `Σ(y − ŷ)² + λ‖w‖²` on standardized
/// columns.
pub fn train(data: &Dataset, lambda: f64) -> Result<LinearModel, LearnError> {
    let n = data.len();
    if n < 2 {
        return Err(LearnError::TooFewPairs { needed: 2, got: n });
    }
    let p = data.schema.len();
    let mut means = vec![0.0; p];
    for row in &data.x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut scales = vec![0.0; p];
    for row in &data.x {
        for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
            *s += (v - m).powi(2);
        }
    }
    for s in &mut scales {
        *s = (*s / n as f64).sqrt();
        if *s <= 1e-12 {
            *s = 1.0;
        }
    }
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    let z = DMatrix::from_fn(n, p, |i, j| (data.x[i][j] - means[j]) / scales[j]);
    let yc = DVector::from_iterator(n, data.y.iter().map(|y| y - y_mean));
    let mut gram = z.transpose() * &z;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = z.transpose() * yc;
    let weights = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .filter(|w| w.iter().all(|v| v.is_finite()))
        .ok_or(LearnError::SingularSystem { lambda })?;
    Ok(LinearModel {
        target: data.target,
        lambda,
        schema: data.schema.names().to_vec(),
        schema_hash: data.schema.hash().to_string(),
        means,
        scales,
        weights: weights.iter().copied().collect(),
        intercept: y_mean,
        n_train: n,
    })
}

/// Validation MAE for one candidate penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mae: f64,
}

/// Fits every penalty in `grid` on `train_set` and keeps the one with the
/// lowest MAE on `validation` (ties go to the larger penalty). Without a
/// validation set the training MAE is used.
pub fn train_with_selection(
    train_set: &Dataset,
    validation: Option<&Dataset>,
    grid: &[f64],
) -> Result<(LinearModel, Vec<LambdaScore>), LearnError> {
    let scorer = validation.filter(|v| !v.is_empty()).unwrap_or(train_set);
    let mut best: Option<(LinearModel, f64)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = train(train_set, lambda)?;
        let mae = scorer
            .x
            .iter()
            .zip(&scorer.y)
            .map(|(x, y)| (model.predict_row(x) - y).abs())
            .sum::<f64>()
            / scorer.len() as f64;
        scores.push(LambdaScore { lambda, mae });
        if best.as_ref().is_none_or(|(_, m)| mae <= *m) {
            best = Some((model, mae));
        }
    }
    let (model, _) = best.ok_or(LearnError::TooFewPairs { needed: 1, got: 0 })?;
    Ok((model, scores))
}

/// Least-squares fit of `SpO2 = a − b·R` to `(R, reference)` points.
pub fn fit_spo2_calibration(points: &[(f64, f64)]) -> Result<SpO2Calibration, LearnError> {
    if points.len() < 2 {
        return Err(LearnError::TooFewPairs { needed: 2, got: points.len() });
    }
    let n = points.len() as f64;
    let rm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sm = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - rm).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - rm) * (p.1 - sm)).sum();
    if sxx <= 1e-24 * rm.abs().max(1.0) {
        return Err(LearnError::DegenerateFit);
    }
    let slope = sxy / sxx;
    Ok(SpO2Calibration { a: sm - slope * rm, b: -slope })
}
