//! Sensor wire frame.
//!
//! ```text
//! offset  size  field
//!      0     2  magic 0x57 0x48 ("WH")
//!      2     2  node_id            (big-endian)
//!      4     1  frame_type         0x01 activity, 0x02 vitals
//!      5     2  seq                (big-endian, wrapping)
//!      7     4  t_ms               (big-endian)
//!     11     n  payload            activity: id (1)
//!                                  vitals:   spo2 (1) | hr - 30 (1) | ratio_r Q16.16 (4, big-endian)
//!   11+n     2  CRC-16/CCITT-FALSE over bytes 0..11+n (big-endian)
//! ```
//!
//! Bit 7 of the vitals `spo2` byte carries the low-confidence flag; saturation
//! itself never exceeds 97.

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vitals::quantize_ratio;
use super::{ActivityId, Quality, VitalsReading, HR_MIN_BPM, SPO2_MAX};

pub const MAGIC: [u8; 2] = [0x57, 0x48];
pub const FRAME_TYPE_ACTIVITY: u8 = 0x01;
pub const FRAME_TYPE_VITALS: u8 = 0x02;

const HEADER_LEN: usize = 11;
const CRC_LEN: usize = 2;
pub const ACTIVITY_FRAME_LEN: usize = HEADER_LEN + 1 + CRC_LEN;
pub const VITALS_FRAME_LEN: usize = HEADER_LEN + 6 + CRC_LEN;
pub const MIN_FRAME_LEN: usize = ACTIVITY_FRAME_LEN;

const LOW_CONFIDENCE_BIT: u8 = 0x80;

// CRC-16/CCITT-FALSE goes by CRC-16/IBM-3740 in the catalogue.
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16_ccitt_false(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FramePayload {
    Activity(ActivityId),
    Vitals { spo2: u8, hr: u16, ratio_r: f64, quality: Quality },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub node_id: u16,
    pub seq: u16,
    pub t_ms: u32,
    pub payload: FramePayload,
}

impl SensorFrame {
    pub fn activity(node_id: u16, seq: u16, t_ms: u32, id: ActivityId) -> Self {
        Self { node_id, seq, t_ms, payload: FramePayload::Activity(id) }
    }

    pub fn vitals(node_id: u16, seq: u16, reading: &VitalsReading) -> Self {
        Self {
            node_id,
            seq,
            t_ms: reading.t_ms,
            payload: FramePayload::Vitals {
                spo2: reading.spo2,
                hr: reading.hr,
                ratio_r: reading.ratio_r,
                quality: reading.quality,
            },
        }
    }

    pub fn activity_id(&self) -> Option<ActivityId> {
        match self.payload {
            FramePayload::Activity(id) => Some(id),
            FramePayload::Vitals { .. } => None,
        }
    }

    pub fn vitals_reading(&self) -> Option<VitalsReading> {
        match self.payload {
            FramePayload::Vitals { spo2, hr, ratio_r, quality } => {
                Some(VitalsReading { t_ms: self.t_ms, spo2, hr, ratio_r, quality })
            }
            FramePayload::Activity(_) => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self.payload {
            FramePayload::Activity(_) => ACTIVITY_FRAME_LEN,
            FramePayload::Vitals { .. } => VITALS_FRAME_LEN,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame has {actual} bytes, need at least {expected}")]
    TruncatedFrame { expected: usize, actual: usize },
    #[error("frame of type {frame_type:#04x} must be {expected} bytes, got {actual}")]
    LengthMismatch { frame_type: u8, expected: usize, actual: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("crc mismatch: frame carries {carried:#06x}, computed {computed:#06x}")]
    CrcMismatch { carried: u16, computed: u16 },
    #[error("unknown frame type {0:#04x}")]
    UnknownFrameType(u8),
    #[error("field out of range: {0}")]
    FieldOutOfRange(String),
}

/// Serializes a frame. Fails when a field cannot be represented on the wire.
pub fn pack_frame(frame: &SensorFrame) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&frame.node_id.to_be_bytes());
    match frame.payload {
        FramePayload::Activity(id) => {
            out.push(FRAME_TYPE_ACTIVITY);
            out.extend_from_slice(&frame.seq.to_be_bytes());
            out.extend_from_slice(&frame.t_ms.to_be_bytes());
            out.push(id.code());
        }
        FramePayload::Vitals { spo2, hr, ratio_r, quality } => {
            if spo2 > SPO2_MAX {
                return Err(FrameError::FieldOutOfRange(format!("spo2 {spo2}")));
            }
            let hr_byte = hr
                .checked_sub(HR_MIN_BPM)
                .and_then(|v| u8::try_from(v).ok())
                .ok_or_else(|| FrameError::FieldOutOfRange(format!("hr {hr}")))?;
            if !(ratio_r >= 0.0 && ratio_r <= f64::from(u32::MAX) / 65536.0) {
                return Err(FrameError::FieldOutOfRange(format!("ratio_r {ratio_r}")));
            }
            let q16 = (quantize_ratio(ratio_r) * 65536.0) as u32;
            let flag = if quality == Quality::LowConfidence { LOW_CONFIDENCE_BIT } else { 0 };

            out.push(FRAME_TYPE_VITALS);
            out.extend_from_slice(&frame.seq.to_be_bytes());
            out.extend_from_slice(&frame.t_ms.to_be_bytes());
            out.push(spo2 | flag);
            out.push(hr_byte);
            out.extend_from_slice(&q16.to_be_bytes());
        }
    }
    let crc = crc16_ccitt_false(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Parses one complete frame. Magic and CRC are checked before any field is
/// interpreted, so a corrupted byte anywhere surfaces as `BadMagic` or `CrcMismatch`.
pub fn unpack_frame(bytes: &[u8]) -> Result<SensorFrame, FrameError> {
    if bytes.len() < MIN_FRAME_LEN {
        return Err(FrameError::TruncatedFrame { expected: MIN_FRAME_LEN, actual: bytes.len() });
    }
    if bytes[..2] != MAGIC {
        return Err(FrameError::BadMagic([bytes[0], bytes[1]]));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - CRC_LEN);
    let carried = u16::from_be_bytes([crc_bytes[0], crc_bytes[1]]);
    let computed = crc16_ccitt_false(body);
    if carried != computed {
        return Err(FrameError::CrcMismatch { carried, computed });
    }

    let frame_type = bytes[4];
    let expected = match frame_type {
        FRAME_TYPE_ACTIVITY => ACTIVITY_FRAME_LEN,
        FRAME_TYPE_VITALS => VITALS_FRAME_LEN,
        other => return Err(FrameError::UnknownFrameType(other)),
    };
    if bytes.len() != expected {
        return Err(FrameError::LengthMismatch { frame_type, expected, actual: bytes.len() });
    }

    let node_id = u16::from_be_bytes([bytes[2], bytes[3]]);
    let seq = u16::from_be_bytes([bytes[5], bytes[6]]);
    let t_ms = u32::from_be_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]);
    let payload = if frame_type == FRAME_TYPE_ACTIVITY {
        let id = ActivityId::from_code(bytes[11]).map_err(|e| FrameError::FieldOutOfRange(e.to_string()))?;
        FramePayload::Activity(id)
    } else {
        let quality = if bytes[11] & LOW_CONFIDENCE_BIT != 0 { Quality::LowConfidence } else { Quality::Ok };
        let spo2 = bytes[11] & !LOW_CONFIDENCE_BIT;
        if spo2 > SPO2_MAX {
            return Err(FrameError::FieldOutOfRange(format!("spo2 {spo2}")));
        }
        let hr = u16::from(bytes[12]) + HR_MIN_BPM;
        let q16 = u32::from_be_bytes([bytes[13], bytes[14], bytes[15], bytes[16]]);
        FramePayload::Vitals { spo2, hr, ratio_r: f64::from(q16) / 65536.0, quality }
    };
    Ok(SensorFrame { node_id, seq, t_ms, payload })
}
