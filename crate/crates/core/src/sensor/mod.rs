//! Biomedical sensor firmware: activity classification, vitals extraction and
//! the wire frame the sensors put on the body-area link.

pub mod activity;
pub mod frame;
pub mod node;
pub mod vitals;

use serde::{Deserialize, Serialize};

pub use activity::{classify_activity, ActivityId, ClassifierConfig};
pub use frame::{pack_frame, unpack_frame, FrameError, FramePayload, SensorFrame};
pub use node::{AccelSensor, PpgSensor};
pub use vitals::{ac_dc_decompose, estimate_hr, extract_vitals, ratio_to_spo2, AcDc, HrEstimate, VitalsError};

pub const SPO2_MAX: u8 = 97;
pub const HR_MIN_BPM: u16 = 30;
pub const HR_MAX_BPM: u16 = 245;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    LowConfidence,
}

/// One SpO₂/HR estimate from a PPG window.
///
/// `ratio_r` is always a multiple of 2⁻¹⁶ so it survives the Q16.16 wire field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsReading {
    pub t_ms: u32,
    pub spo2: u8,
    pub hr: u16,
    pub ratio_r: f64,
    pub quality: Quality,
}

impl VitalsReading {
    pub fn is_within_invariants(&self) -> bool {
        self.spo2 <= SPO2_MAX
            && (self.quality == Quality::LowConfidence || (HR_MIN_BPM..=HR_MAX_BPM).contains(&self.hr))
    }
}
