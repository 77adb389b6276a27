use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::AccelSample;

/// Motion state reported by the accelerometer node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum ActivityId {
    Resting = 1,
    Walking = 2,
    Running = 3,
    Falling = 4,
}

impl ActivityId {
    pub const ALL: [ActivityId; 4] = [Self::Resting, Self::Walking, Self::Running, Self::Falling];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, InvalidActivity> {
        match code {
            1 => Ok(Self::Resting),
            2 => Ok(Self::Walking),
            3 => Ok(Self::Running),
            4 => Ok(Self::Falling),
            other => Err(InvalidActivity(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Resting => "resting",
            Self::Walking => "walking",
            Self::Running => "running",
            Self::Falling => "falling",
        }
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.code(), self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("activity id {0} outside 1..=4")]
pub struct InvalidActivity(pub u8);

impl TryFrom<u8> for ActivityId {
    type Error = InvalidActivity;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Self::from_code(code)
    }
}

impl From<ActivityId> for u8 {
    fn from(id: ActivityId) -> u8 {
        id.code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub window_len: usize,
    /// Upper bound of horizontal variance still considered at rest (g²).
    pub rest_var_max: f64,
    pub walk_xy_var_min: f64,
    pub run_z_var_min: f64,
    /// Peak |z| that marks an impact (g).
    pub fall_z_peak_min: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { window_len: 50, rest_var_max: 0.01, walk_xy_var_min: 0.02, run_z_var_min: 0.15, fall_z_peak_min: 2.5 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let thresholds = [self.rest_var_max, self.walk_xy_var_min, self.run_z_var_min, self.fall_z_peak_min];
        if self.window_len < 10 {
            return Err(ClassifierError::InvalidConfig(format!("window_len {} < 10", self.window_len)));
        }
        if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ClassifierError::InvalidConfig("thresholds must be positive".into()));
        }
        if self.rest_var_max >= self.walk_xy_var_min {
            return Err(ClassifierError::InvalidConfig("rest_var_max must be below walk_xy_var_min".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("window has {actual} samples, classifier expects {expected}")]
    WindowSizeMismatch { expected: usize, actual: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Maps one accelerometer window to a motion state.
///
/// Rules are checked in priority order: impact peak, vertical-dominant
/// oscillation, horizontal oscillation, otherwise rest.
pub fn classify_activity(window: &[AccelSample], cfg: &ClassifierConfig) -> Result<ActivityId, ClassifierError> {
    if window.len() != cfg.window_len {
        return Err(ClassifierError::WindowSizeMismatch { expected: cfg.window_len, actual: window.len() });
    }
    let peak_z = window.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    if peak_z >= cfg.fall_z_peak_min {
        return Ok(ActivityId::Falling);
    }
    let var_x = variance(window.iter().map(|s| s.x));
    let var_y = variance(window.iter().map(|s| s.y));
    let var_z = variance(window.iter().map(|s| s.z));
    let var_xy = var_x + var_y;
    if var_z >= cfg.run_z_var_min && var_z > var_xy {
        Ok(ActivityId::Running)
    } else if var_xy >= cfg.walk_xy_var_min {
        Ok(ActivityId::Walking)
    } else {
        Ok(ActivityId::Resting)
    }
}
