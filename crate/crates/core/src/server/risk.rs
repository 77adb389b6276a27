//! Logistic-regression health-risk model.
//!
//! Features: `[(spo2 − 95)/10, (hr − 70)/30, resting, walking, running, falling]`,
//! the last four one-hot. Missing or low-confidence vitals contribute zeros.
//! Training is full-batch gradient descent on mean cross-entropy plus an L2
//! penalty `l2/2·‖w‖²` on the weights (not the bias).

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::Observation;
use crate::sensor::{ActivityId, Quality};

pub const N_FEATURES: usize = 6;
pub type Features = [f64; N_FEATURES];

pub const FEATURE_NAMES: [&str; N_FEATURES] =
    ["spo2_norm", "hr_norm", "is_resting", "is_walking", "is_running", "is_falling"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub weights: Features,
    pub bias: f64,
    pub threshold: f64,
}

impl Default for RiskModel {
    fn default() -> Self {
        Self { weights: [0.0; N_FEATURES], bias: 0.0, threshold: 0.5 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {label} at index {index} is not 0 or 1")]
    NonBinaryLabel { index: usize, label: u8 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyper(String),
}

impl RiskModel {
    pub fn validate(&self) -> Result<(), RiskError> {
        if !self.weights.iter().chain([&self.bias]).all(|w| w.is_finite()) {
            return Err(RiskError::InvalidModel("weights must be finite".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(RiskError::InvalidModel(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }

    pub fn logit(&self, x: &Features) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn probability(&self, x: &Features) -> f64 {
        sigmoid(self.logit(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eᶻ) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn features(obs: &Observation) -> Features {
    let (spo2_norm, hr_norm) = match obs.vitals {
        Some(v) if v.quality == Quality::Ok => ((f64::from(v.spo2) - 95.0) / 10.0, (f64::from(v.hr) - 70.0) / 30.0),
        _ => (0.0, 0.0),
    };
    let one_hot = |id: ActivityId| if obs.activity == id { 1.0 } else { 0.0 };
    [
        spo2_norm,
        hr_norm,
        one_hot(ActivityId::Resting),
        one_hot(ActivityId::Walking),
        one_hot(ActivityId::Running),
        one_hot(ActivityId::Falling),
    ]
}

pub fn risk_score(model: &RiskModel, obs: &Observation) -> f64 {
    model.probability(&features(obs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Features,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.1, epochs: 500, l2: 0.0 }
    }
}

/// Mean cross-entropy plus `l2/2·‖w‖²`.
pub fn loss(weights: &Features, bias: f64, data: &[LabeledSample], l2: f64) -> f64 {
    let model = RiskModel { weights: *weights, bias, threshold: 0.5 };
    let ce: f64 = data
        .iter()
        .map(|s| {
            let z = model.logit(&s.features);
            softplus(z) - f64::from(s.label) * z
        })
        .sum::<f64>()
        / data.len() as f64;
    ce + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`loss`] with respect to weights and bias.
pub fn gradient(weights: &Features, bias: f64, data: &[LabeledSample], l2: f64) -> (Features, f64) {
    let model = RiskModel { weights: *weights, bias, threshold: 0.5 };
    let n = data.len() as f64;
    let mut gw = [0.0; N_FEATURES];
    let mut gb = 0.0;
    for s in data {
        let err = model.probability(&s.features) - f64::from(s.label);
        for (g, x) in gw.iter_mut().zip(&s.features) {
            *g += err * x;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RiskModel,
    /// Loss before the first step and after every epoch.
    pub loss_history: Vec<f64>,
}

pub fn train_model(data: &[LabeledSample], hyper: &TrainConfig) -> Result<TrainOutcome, RiskError> {
    if data.is_empty() {
        return Err(RiskError::EmptyDataset);
    }
    if let Some((index, s)) = data.iter().enumerate().find(|(_, s)| s.label > 1) {
        return Err(RiskError::NonBinaryLabel { index, label: s.label });
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) || !(hyper.l2 >= 0.0 && hyper.l2.is_finite()) {
        return Err(RiskError::InvalidHyper(format!("lr {} l2 {}", hyper.lr, hyper.l2)));
    }
    let mut weights = [0.0; N_FEATURES];
    let mut bias = 0.0;
    let mut loss_history = Vec::with_capacity(hyper.epochs + 1);
    loss_history.push(loss(&weights, bias, data, hyper.l2));
    for _ in 0..hyper.epochs {
        let (gw, gb) = gradient(&weights, bias, data, hyper.l2);
        for (w, g) in weights.iter_mut().zip(gw) {
            *w -= hyper.lr * g;
        }
        bias -= hyper.lr * gb;
        loss_history.push(loss(&weights, bias, data, hyper.l2));
    }
    Ok(TrainOutcome { model: RiskModel { weights, bias, threshold: 0.5 }, loss_history })
}

pub fn accuracy(model: &RiskModel, data: &[LabeledSample]) -> f64 {
    let correct = data.iter().filter(|s| (model.probability(&s.features) >= model.threshold) == (s.label == 1)).count();
    correct as f64 / data.len() as f64
}

/// Synthetic labelled observations: a sample is at risk when saturation is below
/// 90, the pulse leaves 40..=180, or the wearer fell.
pub fn synthetic_training_set(n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let activity = ActivityId::ALL[rng.random_range(0..4)];
            let spo2: u8 = rng.random_range(75..=97);
            let hr: u16 = rng.random_range(35..=200);
            let obs = Observation {
                patient_id: String::new(),
                seq_upload: i as u64,
                t: 0.0,
                activity,
                vitals: Some(crate::api::Vitals { spo2, hr, ratio_r: 0.0, quality: Quality::Ok }),
                location: None,
            };
            let label = u8::from(spo2 < 90 || !(40..=180).contains(&hr) || activity == ActivityId::Falling);
            LabeledSample { features: features(&obs), label }
        })
        .collect()
}

/// Model the server uses when no model file is configured.
pub fn default_model() -> RiskModel {
    static MODEL: OnceLock<RiskModel> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let data = synthetic_training_set(2000, 0x5eed);
            train_model(&data, &TrainConfig { lr: 0.5, epochs: 1500, l2: 1e-3 }).expect("synthetic set is valid").model
        })
        .clone()
}
