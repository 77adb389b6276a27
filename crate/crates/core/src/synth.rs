//! Deterministic sensor trace generators.
//!
//! Accelerometer traces follow a per-state shape: resting is gravity only on the
//! vertical axis, walking oscillates mostly on the front/side axes, running mostly
//! on the vertical axis, and a fall is an impact spike followed by a lying posture.
//! PPG traces are DC plus a sinusoidal pulse on each wavelength, with the AC/DC
//! amplitudes picked so the ratio of ratios inverts the SpO₂ calibration line.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::vitals::{CALIBRATION_INTERCEPT, CALIBRATION_SLOPE};
use crate::sensor::{ActivityId, HR_MAX_BPM, HR_MIN_BPM, SPO2_MAX};

/// Default sampling frequency of both sensors.
pub const DEFAULT_FS_HZ: f64 = 50.0;
/// Synthetic accelerometer range clamp, in g.
pub const ACCEL_CLAMP_G: f64 = 16.0;

pub const WALK_FREQ_HZ: f64 = 2.0;
pub const WALK_AMPLITUDE_G: f64 = 0.3;
pub const RUN_FREQ_HZ: f64 = 3.0;
pub const RUN_AMPLITUDE_G: f64 = 0.8;
/// Height of the impact spike above the 1 g baseline at fall onset.
pub const FALL_SPIKE_G: f64 = 2.2;

const FALL_SPIKE_DECAY_S: f64 = 0.05;
const FALL_POSTURE_S: f64 = 0.5;

// Baselines for the two light channels, arbitrary intensity units.
const DC_RED: f64 = 40_000.0;
const DC_IR: f64 = 50_000.0;
const IR_PERFUSION: f64 = 0.02;
const MIN_INTENSITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpgSample {
    pub t: f64,
    /// 660 nm channel.
    pub red: f64,
    /// 940 nm channel.
    pub ir: f64,
}

/// What a trace should encode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SynthTarget {
    Activity(ActivityId),
    Vitals { spo2_target: f64, hr_bpm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub target: SynthTarget,
}

impl SynthConfig {
    pub fn accel(state: ActivityId, duration_s: f64, seed: u64, noise_sigma: f64) -> Self {
        Self { fs: DEFAULT_FS_HZ, duration_s, seed, noise_sigma, target: SynthTarget::Activity(state) }
    }

    pub fn ppg(spo2_target: f64, hr_bpm: f64, duration_s: f64, seed: u64, noise_sigma: f64) -> Self {
        Self { fs: DEFAULT_FS_HZ, duration_s, seed, noise_sigma, target: SynthTarget::Vitals { spo2_target, hr_bpm } }
    }

    /// ⌊fs·duration⌋, tolerant of binary rounding in the product.
    pub fn sample_count(&self) -> usize {
        (self.fs * self.duration_s + 1e-9).floor() as usize
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(SynthError::InvalidConfig(format!("fs must be positive, got {}", self.fs)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(SynthError::InvalidConfig(format!("duration_s must be positive, got {}", self.duration_s)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidConfig(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if let SynthTarget::Vitals { spo2_target, hr_bpm } = self.target {
            if !(0.0..=f64::from(SPO2_MAX)).contains(&spo2_target) {
                return Err(SynthError::InvalidConfig(format!("spo2_target {spo2_target} outside 0..={SPO2_MAX}")));
            }
            if !(f64::from(HR_MIN_BPM)..=f64::from(HR_MAX_BPM)).contains(&hr_bpm) {
                return Err(SynthError::InvalidConfig(format!("hr_bpm {hr_bpm} outside {HR_MIN_BPM}..={HR_MAX_BPM}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid activity state {0}, expected 1..=4")]
    InvalidState(u8),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

/// Ratio of ratios embedded by [`synth_ppg`] for a target saturation.
pub fn embedded_ratio(spo2_target: f64) -> f64 {
    (CALIBRATION_INTERCEPT - spo2_target) / CALIBRATION_SLOPE
}

struct Noise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl Noise {
    fn new(seed: u64, sigma: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is finite")),
        }
    }

    fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }

    fn draw(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// Generates a labelled accelerometer trace in g-units.
pub fn synth_accel(cfg: &SynthConfig) -> Result<Vec<AccelSample>, SynthError> {
    cfg.validate()?;
    let SynthTarget::Activity(state) = cfg.target else {
        return Err(SynthError::InvalidConfig("accelerometer synthesis needs an activity target".into()));
    };
    let n = cfg.sample_count();
    let mut noise = Noise::new(cfg.seed, cfg.noise_sigma);

    // Phases and the fall direction come from the seed, before any noise draws.
    let phase_a = 2.0 * PI * noise.uniform();
    let phase_b = 2.0 * PI * noise.uniform();
    let fall_axis_x = noise.uniform() < 0.5;
    let fall_sign = if noise.uniform() < 0.5 { -1.0 } else { 1.0 };

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.fs;
        let (x, y, z) = match state {
            ActivityId::Resting => (0.0, 0.0, 1.0),
            ActivityId::Walking => {
                let w = 2.0 * PI * WALK_FREQ_HZ * t;
                (
                    WALK_AMPLITUDE_G * (w + phase_a).sin(),
                    WALK_AMPLITUDE_G * (w + phase_a + PI / 2.0).sin(),
                    1.0 + 0.05 * (2.0 * w + phase_b).sin(),
                )
            }
            ActivityId::Running => {
                let w = 2.0 * PI * RUN_FREQ_HZ * t;
                (
                    0.15 * (w + phase_b).sin(),
                    0.10 * (w + phase_b + PI / 3.0).sin(),
                    1.0 + RUN_AMPLITUDE_G * (w + phase_a).sin(),
                )
            }
            ActivityId::Falling => {
                let spike = FALL_SPIKE_G * (-t / FALL_SPIKE_DECAY_S).exp();
                let s = (t / FALL_POSTURE_S).min(1.0);
                let settle = s * s * (3.0 - 2.0 * s);
                let horizontal = fall_sign * settle;
                let (x, y) = if fall_axis_x { (horizontal, 0.0) } else { (0.0, horizontal) };
                (x, y, 1.0 - settle + spike)
            }
        };
        let clamp = |v: f64| v.clamp(-ACCEL_CLAMP_G, ACCEL_CLAMP_G);
        out.push(AccelSample { t, x: clamp(x + noise.draw()), y: clamp(y + noise.draw()), z: clamp(z + noise.draw()) });
    }
    Ok(out)
}

/// Generates a two-wavelength PPG trace whose ratio of ratios encodes `spo2_target`
/// and whose pulse rate is `hr_bpm`.
pub fn synth_ppg(cfg: &SynthConfig) -> Result<Vec<PpgSample>, SynthError> {
    cfg.validate()?;
    let SynthTarget::Vitals { spo2_target, hr_bpm } = cfg.target else {
        return Err(SynthError::InvalidConfig("PPG synthesis needs a vitals target".into()));
    };
    let n = cfg.sample_count();
    let mut noise = Noise::new(cfg.seed, cfg.noise_sigma);

    let ratio = embedded_ratio(spo2_target);
    let ac_ir = IR_PERFUSION * DC_IR;
    let ac_red = ratio * IR_PERFUSION * DC_RED;
    let f = hr_bpm / 60.0;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.fs;
        let pulse = (2.0 * PI * f * t).sin();
        out.push(PpgSample {
            t,
            red: (DC_RED + ac_red * pulse + noise.draw()).max(MIN_INTENSITY),
            ir: (DC_IR + ac_ir * pulse + noise.draw()).max(MIN_INTENSITY),
        });
    }
    Ok(out)
}

pub fn write_accel_csv<W: Write>(mut w: W, samples: &[AccelSample]) -> io::Result<()> {
    writeln!(w, "t,x,y,z")?;
    for s in samples {
        writeln!(w, "{:.6},{:.6},{:.6},{:.6}", s.t, s.x, s.y, s.z)?;
    }
    Ok(())
}

pub fn write_ppg_csv<W: Write>(mut w: W, samples: &[PpgSample]) -> io::Result<()> {
    writeln!(w, "t,red,ir")?;
    for s in samples {
        writeln!(w, "{:.6},{:.6},{:.6}", s.t, s.red, s.ir)?;
    }
    Ok(())
}
