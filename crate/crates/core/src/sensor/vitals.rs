//! SpO₂ and heart-rate extraction from two-wavelength PPG windows.
//!
//! Saturation uses the ratio of ratios `R = (AC_red/DC_red) / (AC_ir/DC_ir)` and the
//! empirical line `SpO₂ = 110 − 25·R`, clamped to 0..=97. Heart rate counts
//! prominent peaks on the mean-removed infrared channel.

use thiserror::Error;

use super::{Quality, VitalsReading, HR_MAX_BPM, HR_MIN_BPM, SPO2_MAX};
use crate::synth::PpgSample;

pub const CALIBRATION_INTERCEPT: f64 = 110.0;
pub const CALIBRATION_SLOPE: f64 = 25.0;

/// Shortest window accepted for AC/DC and peak analysis; two cardiac cycles at 30 bpm.
pub const MIN_WINDOW_S: f64 = 4.0;
const MIN_PROMINENCE_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VitalsError {
    #[error("window spans {span_s:.3} s, need at least {MIN_WINDOW_S} s")]
    WindowTooShort { span_s: f64 },
    #[error("non-positive light intensity at sample {index}")]
    NonPositiveSignal { index: usize },
    #[error("no pulse peaks found")]
    NoPeaksFound,
    #[error("negative ratio {0}")]
    NegativeRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcDc {
    pub ac_red: f64,
    pub dc_red: f64,
    pub ac_ir: f64,
    pub dc_ir: f64,
}

impl AcDc {
    /// Ratio of ratios, `None` without a pulsatile infrared component.
    pub fn ratio(&self) -> Option<f64> {
        (self.ac_ir > 0.0 && self.dc_red > 0.0).then(|| (self.ac_red / self.dc_red) / (self.ac_ir / self.dc_ir))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimate {
    pub bpm: f64,
    pub peaks: usize,
    pub quality: Quality,
}

fn check_window(window: &[PpgSample]) -> Result<(), VitalsError> {
    let span_s = match window {
        [first, second, .., last] => last.t - first.t + (second.t - first.t),
        _ => 0.0,
    };
    if span_s < MIN_WINDOW_S - 1e-9 {
        return Err(VitalsError::WindowTooShort { span_s });
    }
    if let Some(index) = window.iter().position(|s| !(s.red > 0.0 && s.ir > 0.0)) {
        return Err(VitalsError::NonPositiveSignal { index });
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn half_range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi - lo) / 2.0
}

/// Splits each channel into its steady (mean) and pulsatile (half peak-to-peak) parts.
pub fn ac_dc_decompose(window: &[PpgSample]) -> Result<AcDc, VitalsError> {
    check_window(window)?;
    let dc_red = mean(window.iter().map(|s| s.red));
    let dc_ir = mean(window.iter().map(|s| s.ir));
    Ok(AcDc {
        ac_red: half_range(window.iter().map(|s| s.red - dc_red)),
        dc_red,
        ac_ir: half_range(window.iter().map(|s| s.ir - dc_ir)),
        dc_ir,
    })
}

/// Calibration line from ratio of ratios to saturation percent.
pub fn ratio_to_spo2(r: f64) -> Result<u8, VitalsError> {
    if r.is_nan() || r < 0.0 {
        return Err(VitalsError::NegativeRatio(r));
    }
    let raw = (CALIBRATION_INTERCEPT - CALIBRATION_SLOPE * r).round();
    Ok(raw.clamp(0.0, f64::from(SPO2_MAX)) as u8)
}

/// Rounds to the Q16.16 grid used on the wire.
pub fn quantize_ratio(r: f64) -> f64 {
    (r * 65536.0).round().clamp(0.0, f64::from(u32::MAX)) / 65536.0
}

/// Prominence of the local maximum at `i`: height above the higher of the two
/// lowest points reachable before a taller sample on each side.
fn prominence(signal: &[f64], i: usize) -> f64 {
    let peak = signal[i];
    let mut left_min = peak;
    for &v in signal[..i].iter().rev() {
        if v > peak {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    for &v in &signal[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Indices of peaks with at least `min_prominence`, at least `min_distance`
/// samples apart; taller peaks win when two are too close.
fn find_peaks(signal: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = signal.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if signal[i] > signal[i - 1] {
            // Walk across a flat top and take its middle.
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[i] {
                let mid = (i + j) / 2;
                if prominence(signal, mid) >= min_prominence {
                    candidates.push(mid);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let mut by_height = candidates.clone();
    by_height.sort_by(|&a, &b| signal[b].total_cmp(&signal[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|&k| k.abs_diff(p) >= min_distance) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Sub-sample peak time from a parabola through the peak and its neighbours.
fn refine_peak_time(window: &[PpgSample], signal: &[f64], i: usize) -> f64 {
    let (a, b, c) = (signal[i - 1], signal[i], signal[i + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let dt = window[i + 1].t - window[i].t;
    window[i].t + offset * dt
}

/// Heart rate from peak spacing on the mean-removed infrared channel.
pub fn estimate_hr(window: &[PpgSample]) -> Result<HrEstimate, VitalsError> {
    check_window(window)?;
    let dc_ir = mean(window.iter().map(|s| s.ir));
    let signal: Vec<f64> = window.iter().map(|s| s.ir - dc_ir).collect();
    let ac_ir = half_range(signal.iter().copied());
    if ac_ir <= 0.0 {
        return Err(VitalsError::NoPeaksFound);
    }
    let dt = window[1].t - window[0].t;
    let min_distance = ((60.0 / f64::from(HR_MAX_BPM)) / dt + 1e-9).floor().max(1.0) as usize;
    let peaks = find_peaks(&signal, min_distance, MIN_PROMINENCE_FRACTION * ac_ir);
    if peaks.len() < 2 {
        return Err(VitalsError::NoPeaksFound);
    }
    let first = refine_peak_time(window, &signal, peaks[0]);
    let last = refine_peak_time(window, &signal, peaks[peaks.len() - 1]);
    let bpm = 60.0 * (peaks.len() - 1) as f64 / (last - first);
    let in_band = (f64::from(HR_MIN_BPM)..=f64::from(HR_MAX_BPM)).contains(&bpm.round());
    Ok(HrEstimate { bpm, peaks: peaks.len(), quality: if in_band { Quality::Ok } else { Quality::LowConfidence } })
}

/// Full vitals pipeline for one window. Signals without a usable pulse yield a
/// low-confidence reading rather than an error; the heart rate is then held
/// inside the representable band.
pub fn extract_vitals(window: &[PpgSample], t_ms: u32) -> Result<VitalsReading, VitalsError> {
    let acdc = ac_dc_decompose(window)?;
    let ratio_r = acdc.ratio().map(quantize_ratio);
    let hr = estimate_hr(window);

    let mut quality = Quality::Ok;
    let spo2 = match ratio_r {
        Some(r) if acdc.ac_red > 0.0 => ratio_to_spo2(r)?,
        _ => {
            quality = Quality::LowConfidence;
            0
        }
    };
    let hr_bpm = match hr {
        Ok(est) => {
            if est.quality == Quality::LowConfidence {
                quality = Quality::LowConfidence;
            }
            est.bpm.round().clamp(f64::from(HR_MIN_BPM), f64::from(HR_MAX_BPM)) as u16
        }
        Err(VitalsError::NoPeaksFound) => {
            quality = Quality::LowConfidence;
            HR_MIN_BPM
        }
        Err(e) => return Err(e),
    };
    Ok(VitalsReading { t_ms, spo2, hr: hr_bpm, ratio_r: ratio_r.unwrap_or(0.0), quality })
}
