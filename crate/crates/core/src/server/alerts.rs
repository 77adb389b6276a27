use serde::{Deserialize, Serialize};

use super::risk::RiskModel;
use crate::api::{AlertCause, Observation};
use crate::sensor::{ActivityId, Quality};

/// Hard safety thresholds checked before the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertRules {
    /// Saturation strictly below this alerts.
    pub spo2_low: u8,
    pub hr_low: u16,
    pub hr_high: u16,
}

impl Default for AlertRules {
    fn default() -> Self {
        Self { spo2_low: 90, hr_low: 40, hr_high: 180 }
    }
}

/// First matching cause, in order: fall, low saturation, heart rate out of
/// band, model risk at or above the threshold. Vitals rules only consider
/// readings of good quality.
pub fn evaluate_alert(obs: &Observation, risk: f64, model: &RiskModel, rules: &AlertRules) -> Option<AlertCause> {
    if obs.activity == ActivityId::Falling {
        return Some(AlertCause::RuleFall);
    }
    if let Some(v) = obs.vitals.filter(|v| v.quality == Quality::Ok) {
        if v.spo2 < rules.spo2_low {
            return Some(AlertCause::RuleSpo2Low);
        }
        if v.hr < rules.hr_low || v.hr > rules.hr_high {
            return Some(AlertCause::RuleHrOutOfBand);
        }
    }
    (risk >= model.threshold).then_some(AlertCause::ModelRisk)
}
