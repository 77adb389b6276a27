//! Gateway between a patient's body-area network and the health server.
//!
//! Frames arriving from the TDMA link are fused into observations, passed
//! through the delta gate, tagged with a location when alert-relevant and
//! uploaded with retries. The server deduplicates on (patient, seq), so a
//! retried upload never creates a second record.

use std::collections::VecDeque;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::{Ack, ApiClient, Booking, ClientError, GeoLocation, InfoBundle, Observation, Transport, Vitals};
use crate::sensor::{ActivityId, SensorFrame};

pub const DEFAULT_FUSION_WINDOW_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    #[default]
    Exact,
    Thresholded,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaPolicy {
    pub mode: DeltaMode,
    pub eps_spo2: f64,
    pub eps_hr: f64,
}

impl DeltaPolicy {
    pub fn thresholded(eps_spo2: f64, eps_hr: f64) -> Self {
        Self { mode: DeltaMode::Thresholded, eps_spo2, eps_hr }
    }

    pub fn validate(&self) -> Result<(), BaseNodeError> {
        if !(self.eps_spo2 >= 0.0 && self.eps_hr >= 0.0 && self.eps_spo2.is_finite() && self.eps_hr.is_finite()) {
            return Err(BaseNodeError::InvalidConfig(format!("negative or non-finite eps in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaseNodeError {
    #[error("no activity frame in the fusion window")]
    NoActivityData,
    #[error("server rejected credentials: {0}")]
    Unauthorized(String),
    #[error("server unreachable after {attempts} attempts: {last}")]
    ServerUnreachable { attempts: u32, last: String },
    #[error("server rejected the upload: {0}")]
    RejectedInvalid(String),
    #[error("request failed with {status} {code}")]
    Rejected { status: u16, code: String },
    #[error("slot {0} already booked")]
    SlotTaken(String),
    #[error("unknown slot {0}")]
    UnknownSlot(String),
    #[error("invalid base node config: {0}")]
    InvalidConfig(String),
}

impl From<ClientError> for BaseNodeError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { status: 401 | 403, message, .. } => Self::Unauthorized(message),
            ClientError::Api { status: 400, message, .. } => Self::RejectedInvalid(message),
            ClientError::Api { status, code, .. } => Self::Rejected { status, code },
            ClientError::Transport(t) => Self::ServerUnreachable { attempts: 1, last: t.0 },
            ClientError::Decode(m) => Self::RejectedInvalid(m),
        }
    }
}

fn frame_time_s(f: &SensorFrame) -> f64 {
    f64::from(f.t_ms) / 1000.0
}

/// Fuses frames into one observation. The window ends at the newest frame and
/// reaches back `window_s`; the latest activity and latest vitals inside it win.
/// The returned observation carries `seq_upload = 0` and no location.
pub fn fuse_observation(patient_id: &str, frames: &[SensorFrame], window_s: f64) -> Result<Observation, BaseNodeError> {
    let newest = frames.iter().map(frame_time_s).fold(f64::NEG_INFINITY, f64::max);
    let in_window = |f: &&SensorFrame| frame_time_s(f) >= newest - window_s;
    let latest_by = |pick: fn(&SensorFrame) -> bool| {
        frames.iter().filter(in_window).filter(|f| pick(f)).fold(None, |best: Option<&SensorFrame>, f| match best {
            Some(b) if b.t_ms > f.t_ms => Some(b),
            _ => Some(f),
        })
    };
    let activity = latest_by(|f| f.activity_id().is_some()).ok_or(BaseNodeError::NoActivityData)?;
    let vitals = latest_by(|f| f.vitals_reading().is_some());
    let t_ms = vitals.map_or(activity.t_ms, |v| v.t_ms.max(activity.t_ms));
    Ok(Observation {
        patient_id: patient_id.to_owned(),
        seq_upload: 0,
        t: f64::from(t_ms) / 1000.0,
        activity: activity.activity_id().expect("filtered"),
        vitals: vitals.and_then(SensorFrame::vitals_reading).map(|r| Vitals {
            spo2: r.spo2,
            hr: r.hr,
            ratio_r: r.ratio_r,
            quality: r.quality,
        }),
        location: None,
    })
}

/// Whether `next` differs enough from the last uploaded observation to send.
/// Activity, vitals presence and the quality flag always count; `ratio_r` is
/// not compared since saturation is its calibrated image.
pub fn delta_gate(last_sent: Option<&Observation>, next: &Observation, policy: &DeltaPolicy) -> bool {
    let Some(last) = last_sent else { return true };
    if last.activity != next.activity {
        return true;
    }
    match (last.vitals, next.vitals) {
        (None, None) => false,
        (Some(a), Some(b)) => {
            if a.quality != b.quality {
                return true;
            }
            match policy.mode {
                DeltaMode::Exact => a.spo2 != b.spo2 || a.hr != b.hr,
                DeltaMode::Thresholded => {
                    (f64::from(a.spo2) - f64::from(b.spo2)).abs() > policy.eps_spo2
                        || (f64::from(a.hr) - f64::from(b.hr)).abs() > policy.eps_hr
                }
            }
        }
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseNodeConfig {
    pub patient_id: String,
    pub policy: DeltaPolicy,
    pub fusion_window_s: f64,
    pub retry: RetryPolicy,
    /// Position reported by the gateway's GPS; the fix time is set per upload.
    pub location: Option<GeoLocation>,
}

impl BaseNodeConfig {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            policy: DeltaPolicy::default(),
            fusion_window_s: DEFAULT_FUSION_WINDOW_S,
            retry: RetryPolicy::default(),
            location: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeEventKind {
    Uploaded { server_seq: u64, duplicate: bool, alert_id: Option<u64>, with_location: bool },
    Suppressed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeEvent {
    pub t: f64,
    pub seq: u64,
    pub activity: ActivityId,
    #[serde(flatten)]
    pub kind: NodeEventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeCounters {
    pub frames: u64,
    pub observations: u64,
    pub uploads: u64,
    pub suppressed: u64,
    pub failures: u64,
    pub retries: u64,
}

pub struct BaseNode<T: Transport> {
    cfg: BaseNodeConfig,
    client: ApiClient<T>,
    token: String,
    buffer: VecDeque<SensorFrame>,
    last_seq: u64,
    last_sent: Option<Observation>,
    high_risk: bool,
    counters: NodeCounters,
    log: Vec<NodeEvent>,
}

impl<T: Transport> BaseNode<T> {
    pub fn new(cfg: BaseNodeConfig, transport: T, token: impl Into<String>) -> Result<Self, BaseNodeError> {
        cfg.policy.validate()?;
        if !(cfg.fusion_window_s.is_finite() && cfg.fusion_window_s >= 0.0) || cfg.retry.max_attempts == 0 {
            return Err(BaseNodeError::InvalidConfig(format!("{cfg:?}")));
        }
        if cfg.location.is_some_and(|l| !l.is_valid()) {
            return Err(BaseNodeError::InvalidConfig(format!("location {:?}", cfg.location)));
        }
        Ok(Self {
            cfg,
            client: ApiClient::new(transport),
            token: token.into(),
            buffer: VecDeque::new(),
            last_seq: 0,
            last_sent: None,
            high_risk: false,
            counters: NodeCounters::default(),
            log: Vec::new(),
        })
    }

    /// Logs in over `transport` and builds a node holding the resulting token.
    pub fn login(cfg: BaseNodeConfig, transport: T, username: &str, password: &str) -> Result<Self, BaseNodeError> {
        let client = ApiClient::new(transport);
        let token = client.login(username, password)?.token;
        Self::new(cfg, client.into_transport(), token)
    }

    pub fn set_token(&mut self, token: impl Into<String>) {
        self.token = token.into();
    }

    pub fn config(&self) -> &BaseNodeConfig {
        &self.cfg
    }

    pub fn counters(&self) -> NodeCounters {
        self.counters
    }

    pub fn events(&self) -> &[NodeEvent] {
        &self.log
    }

    pub fn last_sent(&self) -> Option<&Observation> {
        self.last_sent.as_ref()
    }

    pub fn is_high_risk(&self) -> bool {
        self.high_risk
    }

    /// Accepts one frame from the link. Returns the ack when this frame led to an upload.
    pub fn ingest(&mut self, frame: SensorFrame) -> Result<Option<Ack>, BaseNodeError> {
        self.counters.frames += 1;
        self.buffer.push_back(frame);
        let newest = self.buffer.iter().map(frame_time_s).fold(f64::NEG_INFINITY, f64::max);
        while self.buffer.front().is_some_and(|f| frame_time_s(f) < newest - self.cfg.fusion_window_s) {
            self.buffer.pop_front();
        }
        let frames: Vec<SensorFrame> = self.buffer.iter().cloned().collect();
        match fuse_observation(&self.cfg.patient_id, &frames, self.cfg.fusion_window_s) {
            Ok(obs) => self.offer(obs),
            // Vitals before any activity frame: wait for the accelerometer.
            Err(BaseNodeError::NoActivityData) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Numbers a fused observation and uploads it if the delta gate opens.
    pub fn offer(&mut self, mut obs: Observation) -> Result<Option<Ack>, BaseNodeError> {
        obs.patient_id.clone_from(&self.cfg.patient_id);
        self.last_seq += 1;
        obs.seq_upload = self.last_seq;
        self.counters.observations += 1;
        if !delta_gate(self.last_sent.as_ref(), &obs, &self.cfg.policy) {
            self.counters.suppressed += 1;
            self.record(&obs, NodeEventKind::Suppressed);
            return Ok(None);
        }
        if obs.activity == ActivityId::Falling || self.high_risk {
            obs.location = self.cfg.location.map(|l| GeoLocation { fix_time: obs.t, ..l });
        }
        match self.upload(&obs) {
            Ok(ack) => {
                self.counters.uploads += 1;
                self.high_risk = ack.high_risk;
                self.record(
                    &obs,
                    NodeEventKind::Uploaded {
                        server_seq: ack.server_seq,
                        duplicate: ack.duplicate,
                        alert_id: ack.alert_id,
                        with_location: obs.location.is_some(),
                    },
                );
                self.last_sent = Some(obs);
                Ok(Some(ack))
            }
            Err(e) => {
                self.counters.failures += 1;
                self.record(&obs, NodeEventKind::Failed { error: e.to_string() });
                Err(e)
            }
        }
    }

    /// At-least-once upload; only transport failures are retried.
    pub fn upload(&mut self, obs: &Observation) -> Result<Ack, BaseNodeError> {
        let max = self.cfg.retry.max_attempts;
        let mut attempt = 1;
        loop {
            match self.client.enter_data(&self.token, obs) {
                Ok(ack) => return Ok(ack),
                Err(ClientError::Transport(_)) if attempt < max => {
                    self.counters.retries += 1;
                    if self.cfg.retry.backoff_ms > 0 {
                        thread::sleep(Duration::from_millis(self.cfg.retry.backoff_ms << (attempt - 1).min(6)));
                    }
                    attempt += 1;
                }
                Err(ClientError::Transport(t)) => {
                    return Err(BaseNodeError::ServerUnreachable { attempts: attempt, last: t.0 })
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn sync_info(&self) -> Result<InfoBundle, BaseNodeError> {
        Ok(self.client.get_info(&self.token, &self.cfg.patient_id)?)
    }

    pub fn book_appointment(&self, slot_id: &str) -> Result<Booking, BaseNodeError> {
        self.client.book_appointment(&self.token, &self.cfg.patient_id, slot_id).map_err(|e| match e.code() {
            Some("slot_taken") => BaseNodeError::SlotTaken(slot_id.to_owned()),
            Some("unknown_slot") => BaseNodeError::UnknownSlot(slot_id.to_owned()),
            _ => e.into(),
        })
    }

    fn record(&mut self, obs: &Observation, kind: NodeEventKind) {
        self.log.push(NodeEvent { t: obs.t, seq: obs.seq_upload, activity: obs.activity, kind });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{Quality, VitalsReading};

    fn act(t_ms: u32, id: ActivityId) -> SensorFrame {
        SensorFrame::activity(1, 0, t_ms, id)
    }

    fn vit(t_ms: u32, spo2: u8, hr: u16) -> SensorFrame {
        SensorFrame::vitals(2, 0, &VitalsReading { t_ms, spo2, hr, ratio_r: 0.5, quality: Quality::Ok })
    }

    fn obs(activity: ActivityId, vitals: Option<(u8, u16)>) -> Observation {
        Observation {
            patient_id: "p".into(),
            seq_upload: 0,
            t: 0.0,
            activity,
            vitals: vitals.map(|(spo2, hr)| Vitals { spo2, hr, ratio_r: 0.5, quality: Quality::Ok }),
            location: None,
        }
    }

    #[test]
    fn fusion_passes_single_sources_through() {
        let o = fuse_observation("p", &[act(1000, ActivityId::Walking), vit(1500, 97, 72)], 5.0).unwrap();
        assert_eq!(o.activity, ActivityId::Walking);
        assert_eq!(o.vitals.map(|v| (v.spo2, v.hr)), Some((97, 72)));
        assert_eq!(o.t, 1.5);
    }

    #[test]
    fn fusion_latest_activity_wins() {
        let frames = [act(1000, ActivityId::Resting), act(2000, ActivityId::Resting), act(3000, ActivityId::Falling)];
        let o = fuse_observation("p", &frames, 5.0).unwrap();
        assert_eq!(o.activity, ActivityId::Falling);
        assert_eq!(o.vitals, None);
    }

    #[test]
    fn fusion_needs_activity() {
        assert_eq!(fuse_observation("p", &[vit(1000, 97, 72)], 5.0), Err(BaseNodeError::NoActivityData));
        assert_eq!(fuse_observation("p", &[], 5.0), Err(BaseNodeError::NoActivityData));
    }

    #[test]
    fn fusion_drops_stale_vitals() {
        let o = fuse_observation("p", &[vit(1000, 97, 72), act(7000, ActivityId::Resting)], 5.0).unwrap();
        assert_eq!(o.vitals, None);
    }

    #[test]
    fn gate_exact() {
        let p = DeltaPolicy::default();
        let a = obs(ActivityId::Resting, Some((97, 72)));
        assert!(delta_gate(None, &a, &p));
        assert!(!delta_gate(Some(&a), &a, &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Falling, Some((97, 72))), &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Resting, Some((96, 72))), &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Resting, None), &p));
        let mut r = a.clone();
        r.vitals.as_mut().unwrap().ratio_r = 0.51;
        assert!(!delta_gate(Some(&a), &r, &p));
        let mut q = a.clone();
        q.vitals.as_mut().unwrap().quality = Quality::LowConfidence;
        assert!(delta_gate(Some(&a), &q, &p));
    }

    #[test]
    fn gate_thresholded() {
        let p = DeltaPolicy::thresholded(1.0, 5.0);
        let a = obs(ActivityId::Resting, Some((95, 70)));
        assert!(!delta_gate(Some(&a), &obs(ActivityId::Resting, Some((96, 75))), &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Resting, Some((93, 70))), &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Resting, Some((95, 76))), &p));
        assert!(delta_gate(Some(&a), &obs(ActivityId::Walking, Some((95, 70))), &p));
    }

    #[test]
    fn negative_eps_rejected() {
        assert!(DeltaPolicy::thresholded(-1.0, 0.0).validate().is_err());
    }
}
