//! Reproducible end-to-end runs: scripted patients → synthetic signals →
//! sensor nodes → TDMA link → base nodes → health server.
//!
//! Time is virtual. Each patient has its own body-area channel carrying an
//! accelerometer node and a pulse-oximeter node; delivered frames from all
//! patients are merged in slot-start order and handed to the base nodes. In
//! embedded mode the server clock is set to the delivery time plus half the
//! configured upload round trip before each hand-off, so alert timestamps are
//! on the same axis as the script.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::{AlertCause, ApiClient, ClientError, Demographics, GeoLocation, PatientRegistration, Role, Transport};
use crate::base_node::{BaseNode, BaseNodeConfig, BaseNodeError, DeltaPolicy, NodeCounters, RetryPolicy};
use crate::sensor::activity::ClassifierError;
use crate::sensor::{
    pack_frame, unpack_frame, AccelSensor, ActivityId, ClassifierConfig, FrameError, PpgSensor, SensorFrame,
    VitalsError, HR_MAX_BPM, HR_MIN_BPM, SPO2_MAX,
};
use crate::server::{HealthServer, ManualClock, ServerConfig, ServerError, UserConfig};
use crate::synth::{
    synth_accel, synth_ppg, write_accel_csv, write_ppg_csv, AccelSample, PpgSample, SynthConfig, SynthError,
    DEFAULT_FS_HZ,
};
use crate::tdma::{write_event_csv, ChannelConfig, NodeStats, TdmaChannel, TdmaError, TdmaSchedule, Traffic};

pub const ACCEL_NODE_ID: u16 = 1;
pub const PPG_NODE_ID: u16 = 2;
/// Upper bound on scripted duration (one day).
pub const MAX_DURATION_S: f64 = 86_400.0;

const EMBEDDED_DOCTOR: &str = "scenario-doctor";
const EMBEDDED_PASSWORD_ITERATIONS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub loss_probability: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { loss_probability: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdmaSection {
    pub superframe_slots: u16,
    pub slot_duration_ms: u32,
}

impl Default for TdmaSection {
    fn default() -> Self {
        let s = TdmaSchedule::default();
        Self { superframe_slots: s.superframe_slots(), slot_duration_ms: s.slot_duration_ms() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub fs_hz: f64,
    pub accel_noise_g: f64,
    pub ppg_noise: f64,
    pub ppg_window_s: f64,
    pub ppg_report_every_s: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self { fs_hz: DEFAULT_FS_HZ, accel_noise_g: 0.05, ppg_noise: 0.0, ppg_window_s: 8.0, ppg_report_every_s: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start_s: f64,
    pub activity: ActivityId,
    pub spo2: u8,
    pub hr: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientScript {
    pub patient_id: String,
    /// Derived from the seed when absent.
    #[serde(default)]
    pub location: Option<Position>,
    pub timeline: Vec<Segment>,
}

impl PatientScript {
    /// Segment boundaries as `(start, end, segment)`.
    pub fn spans(&self, duration_s: f64) -> Vec<(f64, f64, Segment)> {
        self.timeline
            .iter()
            .enumerate()
            .map(|(i, s)| (s.start_s, self.timeline.get(i + 1).map_or(duration_s, |n| n.start_s), *s))
            .collect()
    }

    pub fn fall_onsets(&self) -> Vec<f64> {
        let mut prev = None;
        let mut out = Vec::new();
        for s in &self.timeline {
            if s.activity == ActivityId::Falling && prev != Some(ActivityId::Falling) {
                out.push(s.start_s);
            }
            prev = Some(s.activity);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rtt_ms")]
    pub upload_rtt_ms: u64,
    #[serde(default = "default_fusion_window_s")]
    pub fusion_window_s: f64,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub tdma: TdmaSection,
    #[serde(default)]
    pub policy: DeltaPolicy,
    #[serde(default)]
    pub sensors: SensorSection,
    pub patients: Vec<PatientScript>,
}

fn default_rtt_ms() -> u64 {
    100
}

fn default_fusion_window_s() -> f64 {
    crate::base_node::DEFAULT_FUSION_WINDOW_S
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}scenario parse error at line {line}, column {column}: {message}", path_prefix(.path))]
    Parse { path: Option<PathBuf>, line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Tdma(#[from] TdmaError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Vitals(#[from] VitalsError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("base node for {patient_id}: {source}")]
    BaseNode { patient_id: String, source: BaseNodeError },
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("server request failed: {0}")]
    Client(#[from] ClientError),
}

fn path_prefix(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

impl ScenarioError {
    /// The server could not be reached at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(
            self,
            ScenarioError::Client(ClientError::Transport(_))
                | ScenarioError::BaseNode { source: BaseNodeError::ServerUnreachable { .. }, .. }
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, ScenarioError::Parse { .. } | ScenarioError::Invalid(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_owned(), source }
}

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let script: Self = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start).min(text.len());
            let before = &text[..offset];
            let line = before.matches('\n').count() + 1;
            let column = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            ScenarioError::Parse { path: None, line, column, message: e.message().to_owned() }
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            ScenarioError::Parse { line, column, message, .. } => {
                ScenarioError::Parse { path: Some(path.to_owned()), line, column, message }
            }
            ScenarioError::Invalid(m) => ScenarioError::Invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0 && self.duration_s <= MAX_DURATION_S) {
            return bad(format!("duration_s must be in (0, {MAX_DURATION_S}], got {}", self.duration_s));
        }
        if !(self.fusion_window_s.is_finite() && self.fusion_window_s >= 0.0) {
            return bad(format!("fusion_window_s must be non-negative, got {}", self.fusion_window_s));
        }
        self.policy.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let invalid = |e: TdmaError| ScenarioError::Invalid(e.to_string());
        ChannelConfig { loss_probability: self.channel.loss_probability, seed: 0 }.validate().map_err(invalid)?;
        TdmaSchedule::new(self.tdma.superframe_slots, self.tdma.slot_duration_ms).map_err(invalid)?;
        if self.tdma.superframe_slots < 3 {
            return bad("tdma.superframe_slots must leave two data slots".into());
        }
        let s = &self.sensors;
        if !(s.fs_hz.is_finite() && s.fs_hz > 0.0) {
            return bad(format!("sensors.fs_hz must be positive, got {}", s.fs_hz));
        }
        if !(s.accel_noise_g >= 0.0 && s.ppg_noise >= 0.0) {
            return bad("sensor noise must be non-negative".into());
        }
        if !(s.ppg_window_s >= 4.0 && s.ppg_report_every_s > 0.0) {
            return bad("sensors.ppg_window_s must be at least 4 and ppg_report_every_s positive".into());
        }
        if self.patients.is_empty() {
            return bad("no patients".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (pi, p) in self.patients.iter().enumerate() {
            let id = &p.patient_id;
            if id.is_empty() || id.trim() != id || id.contains(['/', '?', '&', '#']) {
                return bad(format!("patients[{pi}]: invalid patient_id {id:?}"));
            }
            if !seen.insert(id.clone()) {
                return bad(format!("patients[{pi}]: duplicate patient_id {id:?}"));
            }
            if let Some(pos) = p.location {
                if !(GeoLocation { lat: pos.lat, lon: pos.lon, fix_time: 0.0 }).is_valid() {
                    return bad(format!("patients[{pi}]: location out of range"));
                }
            }
            let Some(first) = p.timeline.first() else {
                return bad(format!("patients[{pi}]: empty timeline"));
            };
            if first.start_s != 0.0 {
                return bad(format!("patients[{pi}]: timeline must start at 0"));
            }
            for (si, seg) in p.timeline.iter().enumerate() {
                let at = format!("patients[{pi}].timeline[{si}]");
                if !(seg.start_s.is_finite() && seg.start_s < self.duration_s) {
                    return bad(format!("{at}: start_s {} outside [0, duration_s)", seg.start_s));
                }
                if si > 0 && seg.start_s <= p.timeline[si - 1].start_s {
                    return bad(format!("{at}: segments must be ordered and non-overlapping"));
                }
                if seg.spo2 > SPO2_MAX {
                    return bad(format!("{at}: spo2 {} above {SPO2_MAX}", seg.spo2));
                }
                if !(HR_MIN_BPM..=HR_MAX_BPM).contains(&seg.hr) {
                    return bad(format!("{at}: hr {} outside {HR_MIN_BPM}..={HR_MAX_BPM}", seg.hr));
                }
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> TdmaSchedule {
        TdmaSchedule::new(self.tdma.superframe_slots, self.tdma.slot_duration_ms).expect("validated")
    }

    /// One superframe plus one upload round trip, in seconds.
    pub fn latency_bound_s(&self) -> f64 {
        (self.schedule().superframe_ms() + self.upload_rtt_ms) as f64 / 1000.0
    }
}

/// Where uploads go.
#[derive(Clone)]
pub enum Endpoint {
    /// A fresh in-process server on the scenario's virtual clock.
    Embedded,
    /// An existing server; patients are registered with the given doctor account.
    Remote { transport: Arc<dyn Transport>, username: String, password: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertRecord {
    pub alert_id: u64,
    pub patient_id: String,
    pub cause: AlertCause,
    pub t: f64,
    pub risk: f64,
    pub location: Option<GeoLocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FallOutcome {
    pub patient_id: String,
    pub onset_s: f64,
    pub alert_id: Option<u64>,
    pub alert_t: Option<f64>,
    /// Alert time minus onset; only meaningful on the embedded virtual clock.
    pub latency_s: Option<f64>,
    pub within_bound: Option<bool>,
    pub location_attached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientReport {
    pub patient_id: String,
    pub frames_generated: u64,
    pub node: NodeCounters,
    pub suppression_ratio: f64,
    pub server_stored: usize,
    pub channel: NodeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: &'static str,
    pub seed: u64,
    pub duration_s: f64,
    pub superframes: u64,
    pub superframe_ms: u64,
    pub upload_rtt_ms: u64,
    pub latency_bound_s: f64,
    pub patients: Vec<PatientReport>,
    pub channel: NodeStats,
    pub alerts: Vec<AlertRecord>,
    pub falls: Vec<FallOutcome>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Synthetic signals and the resulting sensor frames for one patient.
struct PatientSignals {
    accel: Vec<AccelSample>,
    ppg: Vec<PpgSample>,
    frames: Vec<(u16, SensorFrame)>,
}

fn simulate_sensors(
    script: &ScenarioScript,
    p: &PatientScript,
    rng: &mut ChaCha8Rng,
) -> Result<PatientSignals, ScenarioError> {
    let s = &script.sensors;
    let mut accel = Vec::new();
    let mut ppg = Vec::new();
    for (start, end, seg) in p.spans(script.duration_s) {
        let mut a = SynthConfig::accel(seg.activity, end - start, rng.next_u64(), s.accel_noise_g);
        a.fs = s.fs_hz;
        let mut v = SynthConfig::ppg(f64::from(seg.spo2), f64::from(seg.hr), end - start, rng.next_u64(), s.ppg_noise);
        v.fs = s.fs_hz;
        accel.extend(synth_accel(&a)?.into_iter().map(|x| AccelSample { t: x.t + start, ..x }));
        ppg.extend(synth_ppg(&v)?.into_iter().map(|x| PpgSample { t: x.t + start, ..x }));
    }

    let mut accel_node = AccelSensor::new(ACCEL_NODE_ID, ClassifierConfig::default())?;
    let window = (s.ppg_window_s * s.fs_hz).round() as usize;
    let every = ((s.ppg_report_every_s * s.fs_hz).round() as usize).max(1);
    let mut ppg_node = PpgSensor::new(PPG_NODE_ID, window, every);
    let mut frames = Vec::new();
    let mut out = Vec::new();
    for x in &accel {
        accel_node.push(*x, &mut out);
    }
    frames.extend(out.drain(..).map(|f| (ACCEL_NODE_ID, f)));
    for x in &ppg {
        ppg_node.push(*x, &mut out)?;
    }
    frames.extend(out.drain(..).map(|f| (PPG_NODE_ID, f)));
    Ok(PatientSignals { accel, ppg, frames })
}

struct Delivered {
    at_ms: u64,
    patient: usize,
    frame: SensorFrame,
}

/// Runs a script end to end. With `trace_dir`, per-patient signals, channel
/// events and base-node logs are written there as CSV / JSON lines.
pub fn run_scenario(
    script: &ScenarioScript,
    endpoint: &Endpoint,
    trace_dir: Option<&Path>,
) -> Result<RunReport, ScenarioError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let schedule = script.schedule();
    let superframe_ms = schedule.superframe_ms();
    let duration_ms = (script.duration_s * 1000.0).ceil() as u64;
    // One extra superframe drains frames produced in the final one.
    let superframes = duration_ms.div_ceil(superframe_ms) + 1;

    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let clock = Arc::new(ManualClock::new(0.0));
    let (transport, doctor_user, doctor_password): (Arc<dyn Transport>, String, String) = match endpoint {
        Endpoint::Embedded => {
            let password = format!("{:016x}", rng.next_u64());
            let cfg = ServerConfig {
                token_ttl_s: script.duration_s + 3600.0,
                password_iterations: EMBEDDED_PASSWORD_ITERATIONS,
                users: vec![UserConfig {
                    username: EMBEDDED_DOCTOR.into(),
                    password: password.clone(),
                    role: Role::Doctor,
                }],
                ..ServerConfig::default()
            };
            let server = HealthServer::new(cfg, clock.clone())?;
            (Arc::new(server), EMBEDDED_DOCTOR.into(), password)
        }
        Endpoint::Remote { transport, username, password } => (transport.clone(), username.clone(), password.clone()),
    };
    let embedded = matches!(endpoint, Endpoint::Embedded);
    let doctor = ApiClient::new(transport.clone());
    let doctor_token = doctor.login(&doctor_user, &doctor_password)?.token;

    let mut nodes = Vec::new();
    let mut delivered = Vec::new();
    let mut channel_stats = Vec::new();
    let mut frames_generated = Vec::new();
    for (pi, p) in script.patients.iter().enumerate() {
        let mut prng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let password = format!("{:016x}", prng.next_u64());
        let position = p
            .location
            .unwrap_or_else(|| Position { lat: prng.random_range(-60.0..60.0), lon: prng.random_range(-180.0..180.0) });
        doctor.add_patient(
            &doctor_token,
            &PatientRegistration {
                patient_id: p.patient_id.clone(),
                demographics: Demographics { name: p.patient_id.clone(), year_of_birth: 1950 },
                password: Some(password.clone()),
            },
        )?;
        let cfg = BaseNodeConfig {
            patient_id: p.patient_id.clone(),
            policy: script.policy,
            fusion_window_s: script.fusion_window_s,
            retry: if embedded { RetryPolicy { max_attempts: 1, backoff_ms: 0 } } else { RetryPolicy::default() },
            location: Some(GeoLocation { lat: position.lat, lon: position.lon, fix_time: 0.0 }),
        };
        let node = BaseNode::login(cfg, transport.clone(), &p.patient_id, &password)
            .map_err(|source| ScenarioError::BaseNode { patient_id: p.patient_id.clone(), source })?;
        nodes.push(node);

        let signals = simulate_sensors(script, p, &mut prng)?;
        frames_generated.push(signals.frames.len() as u64);
        let mut sched = schedule.clone();
        sched.register_node(ACCEL_NODE_ID)?;
        sched.register_node(PPG_NODE_ID)?;
        let mut channel = TdmaChannel::new(
            sched,
            ChannelConfig { loss_probability: script.channel.loss_probability, seed: prng.next_u64() },
        )?;
        let mut traffic = Traffic::latest_wins();
        let mut frames = signals.frames.clone();
        frames.sort_by_key(|(node, f)| (f.t_ms, *node));
        for (node, f) in frames {
            traffic.enqueue(node, u64::from(f.t_ms), f);
        }
        let run = channel.run_superframes(&mut traffic, superframes)?;
        for e in &run.events {
            if let Some(tx) = e.delivered() {
                // Frames cross the link as bytes.
                let frame = unpack_frame(&pack_frame(&tx.frame)?)?;
                delivered.push(Delivered { at_ms: e.start_ms, patient: pi, frame });
            }
        }
        channel_stats.push(run.totals());

        if let Some(dir) = trace_dir {
            let stem = &p.patient_id;
            write_trace(dir, &format!("{stem}_accel.csv"), |w| write_accel_csv(w, &signals.accel))?;
            write_trace(dir, &format!("{stem}_ppg.csv"), |w| write_ppg_csv(w, &signals.ppg))?;
            write_trace(dir, &format!("{stem}_tdma.csv"), |w| write_event_csv(w, &run.events))?;
        }
    }

    delivered.sort_by_key(|d| (d.at_ms, d.patient, d.frame.node_id));
    let half_rtt_s = script.upload_rtt_ms as f64 / 2000.0;
    for d in delivered {
        clock.set(d.at_ms as f64 / 1000.0 + half_rtt_s);
        let node = &mut nodes[d.patient];
        node.ingest(d.frame).map_err(|source| ScenarioError::BaseNode {
            patient_id: script.patients[d.patient].patient_id.clone(),
            source,
        })?;
    }

    let mut patients = Vec::new();
    let mut total = NodeStats::default();
    for (pi, p) in script.patients.iter().enumerate() {
        let counters = nodes[pi].counters();
        let stored = doctor.collect_data(&doctor_token, &p.patient_id, None, None)?.len();
        total.add(&channel_stats[pi]);
        patients.push(PatientReport {
            patient_id: p.patient_id.clone(),
            frames_generated: frames_generated[pi],
            node: counters,
            suppression_ratio: if counters.observations == 0 {
                0.0
            } else {
                1.0 - counters.uploads as f64 / counters.observations as f64
            },
            server_stored: stored,
            channel: channel_stats[pi],
        });
        if let Some(dir) = trace_dir {
            write_trace(dir, &format!("{}_uploads.jsonl", p.patient_id), |w| {
                for e in nodes[pi].events() {
                    serde_json::to_writer(&mut *w, e).map_err(io::Error::from)?;
                    w.write_all(b"\n")?;
                }
                Ok(())
            })?;
        }
    }

    let ids: std::collections::BTreeSet<&str> = script.patients.iter().map(|p| p.patient_id.as_str()).collect();
    let alerts: Vec<AlertRecord> = doctor
        .alerts(&doctor_token, None)?
        .into_iter()
        .filter(|a| ids.contains(a.patient_id.as_str()))
        .map(|a| AlertRecord {
            alert_id: a.alert_id,
            patient_id: a.patient_id,
            cause: a.cause,
            t: a.t,
            risk: a.risk,
            location: a.location,
        })
        .collect();

    let bound = script.latency_bound_s();
    let mut falls = Vec::new();
    for p in &script.patients {
        let onsets = p.fall_onsets();
        for (i, onset) in onsets.iter().enumerate() {
            let next = onsets.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let hit = alerts.iter().find(|a| {
                a.patient_id == p.patient_id && a.cause == AlertCause::RuleFall && a.t >= *onset && a.t < next
            });
            let latency = hit.filter(|_| embedded).map(|a| a.t - onset);
            falls.push(FallOutcome {
                patient_id: p.patient_id.clone(),
                onset_s: *onset,
                alert_id: hit.map(|a| a.alert_id),
                alert_t: hit.map(|a| a.t),
                latency_s: latency,
                within_bound: latency.map(|l| l <= bound + 1e-9),
                location_attached: hit.is_some_and(|a| a.location.is_some()),
            });
        }
    }

    let report = RunReport {
        mode: if embedded { "embedded" } else { "remote" },
        seed: script.seed,
        duration_s: script.duration_s,
        superframes,
        superframe_ms,
        upload_rtt_ms: script.upload_rtt_ms,
        latency_bound_s: bound,
        patients,
        channel: total,
        alerts,
        falls,
    };
    if let Some(dir) = trace_dir {
        let path = dir.join("report.json");
        fs::write(&path, report.to_json()).map_err(io_err(&path))?;
    }
    Ok(report)
}

fn write_trace(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), ScenarioError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    body(&mut w).and_then(|()| w.flush()).map_err(io_err(&path))
}

/// Per-patient totals keyed by id, for callers that prefer lookups.
pub fn patients_by_id(report: &RunReport) -> BTreeMap<&str, &PatientReport> {
    report.patients.iter().map(|p| (p.patient_id.as_str(), p)).collect()
}
