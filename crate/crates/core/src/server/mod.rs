//! Health server: patient registry, authenticated ingestion and retrieval,
//! risk scoring and alerting, clinician info and appointment slots.
//!
//! All registry state lives behind one lock, so every mutation is linearizable
//! (in particular per patient), journalled before it becomes visible, and the
//! journal order is the replay order.

pub mod alerts;
pub mod auth;
pub mod risk;
pub mod routes;
pub mod state;
pub mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::alerts::{evaluate_alert, AlertRules};
use self::auth::{verify_login, Session, StoredCredential, TokenStore};
use self::risk::{default_model, risk_score, RiskModel};
use self::state::{parse_slot_id, slot_id, InfoItem, JournalEntry, Mutation, ServerState, StoredObservation};
use self::store::{Store, StoreError};
use crate::api::{
    Ack, Alert, AlertCause, AlertState, AppointmentRequest, Booking, ConsultSlot, HistoryStats, InfoAck, InfoBundle,
    InfoRecord, InfoUpload, LoginResponse, ManualAlertRequest, MonitoringStatus, Observation, PatientRegistration,
    PatientSummary, Role, StreamBatch,
};
use crate::sensor::{Quality, HR_MAX_BPM, HR_MIN_BPM, SPO2_MAX};

pub use self::routes::handle;

/// Seconds on the server's time axis.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
    }
}

/// Externally driven clock for simulations and tests.
#[derive(Debug, Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn new(t: f64) -> Self {
        Self(Mutex::new(t))
    }

    pub fn set(&self, t: f64) {
        *self.0.lock().expect("clock lock") = t;
    }

    pub fn advance(&self, dt: f64) {
        *self.0.lock().expect("clock lock") += dt;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock().expect("clock lock")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserConfig {
    pub username: String,
    pub password: String,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::Doctor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    /// Journal and snapshot directory; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// JSON-serialized [`RiskModel`]; the built-in model is used when absent.
    pub model_file: Option<PathBuf>,
    /// Overrides the model's alert threshold τ.
    pub risk_threshold: Option<f64>,
    pub rules: AlertRules,
    pub static_dir: Option<PathBuf>,
    pub token_ttl_s: f64,
    pub snapshot_every: u64,
    pub password_iterations: u32,
    pub users: Vec<UserConfig>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: None,
            model_file: None,
            risk_threshold: None,
            rules: AlertRules::default(),
            static_dir: None,
            token_ttl_s: 3600.0,
            snapshot_every: 1000,
            password_iterations: 4096,
            users: Vec::new(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    /// Reads a TOML config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text = fs::read_to_string(path).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.model_file, &mut cfg.static_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("missing, invalid or expired token")]
    Unauthorized,
    #[error("role not permitted for this operation")]
    Forbidden,
    #[error("bad credentials")]
    BadCredentials,
    #[error("unknown patient {0}")]
    UnknownPatient(String),
    #[error("patient {0} already registered")]
    DuplicatePatient(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("slot overlaps {0}")]
    OverlappingSlot(String),
    #[error("slot {0} already booked")]
    SlotTaken(String),
    #[error("unknown slot {0}")]
    UnknownSlot(String),
    #[error("unknown alert {0}")]
    UnknownAlert(u64),
    #[error("alert {0} already acknowledged")]
    AlreadyAcknowledged(u64),
    #[error("not found")]
    NotFound,
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServerError {
    pub fn status(&self) -> u16 {
        match self {
            Self::Unauthorized | Self::BadCredentials => 401,
            Self::Forbidden => 403,
            Self::UnknownPatient(_) | Self::UnknownSlot(_) | Self::UnknownAlert(_) | Self::NotFound => 404,
            Self::MethodNotAllowed => 405,
            Self::DuplicatePatient(_)
            | Self::OverlappingSlot(_)
            | Self::SlotTaken(_)
            | Self::AlreadyAcknowledged(_) => 409,
            Self::InvalidObservation(_) | Self::BadRequest(_) => 400,
            Self::Config(_) | Self::Store(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Unauthorized => "unauthorized",
            Self::Forbidden => "forbidden",
            Self::BadCredentials => "bad_credentials",
            Self::UnknownPatient(_) => "unknown_patient",
            Self::DuplicatePatient(_) => "duplicate_patient",
            Self::InvalidObservation(_) => "invalid_observation",
            Self::BadRequest(_) => "bad_request",
            Self::OverlappingSlot(_) => "overlapping_slot",
            Self::SlotTaken(_) => "slot_taken",
            Self::UnknownSlot(_) => "unknown_slot",
            Self::UnknownAlert(_) => "unknown_alert",
            Self::AlreadyAcknowledged(_) => "already_acknowledged",
            Self::NotFound => "not_found",
            Self::MethodNotAllowed => "method_not_allowed",
            Self::Config(_) => "config",
            Self::Store(_) => "storage",
        }
    }
}

pub type Result<T, E = ServerError> = std::result::Result<T, E>;

/// Longest a stream request may block.
pub const MAX_LONG_POLL_MS: u64 = 30_000;

pub struct HealthServer {
    config: ServerConfig,
    model: RiskModel,
    clock: Arc<dyn Clock>,
    doctors: BTreeMap<String, StoredCredential>,
    decoy: StoredCredential,
    tokens: Mutex<TokenStore>,
    state: Mutex<ServerState>,
    alert_signal: Condvar,
    store: Mutex<Option<Store>>,
}

impl std::fmt::Debug for HealthServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HealthServer").field("config", &self.config).finish_non_exhaustive()
    }
}

impl HealthServer {
    /// Builds a server, restoring state from `config.data_dir` when set.
    pub fn new(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let mut model = match &config.model_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| ServerError::Config(format!("model file {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| ServerError::Config(format!("model file {}: {e}", path.display())))?
            }
            None => default_model(),
        };
        if let Some(tau) = config.risk_threshold {
            model.threshold = tau;
        }
        model.validate().map_err(|e| ServerError::Config(e.to_string()))?;

        let iterations = config.password_iterations.max(1);
        let doctors = config
            .users
            .iter()
            .map(|u| (u.username.clone(), StoredCredential::new(&u.password, u.role, None, iterations)))
            .collect();
        let decoy = StoredCredential::new("decoy", Role::Doctor, None, iterations);

        let (store, state) = match &config.data_dir {
            Some(dir) => {
                let (store, state) = Store::open(dir, config.snapshot_every)?;
                (Some(store), state)
            }
            None => (None, ServerState::new()),
        };

        Ok(Self {
            config,
            model,
            clock,
            doctors,
            decoy,
            tokens: Mutex::new(TokenStore::default()),
            state: Mutex::new(state),
            alert_signal: Condvar::new(),
            store: Mutex::new(store),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    fn lock_state(&self) -> MutexGuard<'_, ServerState> {
        self.state.lock().expect("state lock poisoned")
    }

    /// Copy of the registry, for inspection and tests.
    pub fn state_snapshot(&self) -> ServerState {
        self.lock_state().clone()
    }

    /// Journals and applies one mutation while the state lock is held.
    fn commit(&self, state: &mut ServerState, mutation: Mutation) -> Result<()> {
        let seq = state.journal_seq + 1;
        let entry = JournalEntry { seq, mutation };
        let mut store = self.store.lock().expect("store lock poisoned");
        if let Some(store) = store.as_mut() {
            store.append(&entry)?;
        }
        state.apply(seq, &entry.mutation);
        if let Some(store) = store.as_mut() {
            if store.snapshot_due() {
                store.write_snapshot(state)?;
            }
        }
        Ok(())
    }

    /// Writes a snapshot now and truncates the journal.
    pub fn snapshot(&self) -> Result<()> {
        let state = self.lock_state();
        if let Some(store) = self.store.lock().expect("store lock poisoned").as_mut() {
            store.write_snapshot(&state)?;
        }
        Ok(())
    }

    // ---- authentication -------------------------------------------------

    pub fn authenticate(&self, username: &str, password: &str) -> Result<LoginResponse> {
        let patient_cred = self.lock_state().credentials.get(username).cloned();
        let cred = self.doctors.get(username).or(patient_cred.as_ref());
        if !verify_login(cred, password, &self.decoy) {
            return Err(ServerError::BadCredentials);
        }
        let cred = cred.expect("verified credential exists");
        let expires_at = self.now() + self.config.token_ttl_s;
        let session =
            Session { username: username.to_owned(), role: cred.role, patient_id: cred.patient_id.clone(), expires_at };
        let token = self.tokens.lock().expect("token lock poisoned").issue(session);
        Ok(LoginResponse { token, role: cred.role, expires_at })
    }

    pub fn session(&self, token: Option<&str>) -> Result<Session> {
        let token = token.ok_or(ServerError::Unauthorized)?;
        self.tokens.lock().expect("token lock poisoned").resolve(token, self.now()).ok_or(ServerError::Unauthorized)
    }

    fn require_doctor(&self, token: Option<&str>) -> Result<Session> {
        let s = self.session(token)?;
        if s.role != Role::Doctor {
            return Err(ServerError::Forbidden);
        }
        Ok(s)
    }

    fn require_doctor_or_owner(&self, token: Option<&str>, patient_id: &str) -> Result<Session> {
        let s = self.session(token)?;
        if s.role == Role::Doctor || s.owns(patient_id) {
            Ok(s)
        } else {
            Err(ServerError::Forbidden)
        }
    }

    // ---- registry -------------------------------------------------------

    pub fn add_patient(&self, token: Option<&str>, reg: &PatientRegistration) -> Result<PatientSummary> {
        self.require_doctor(token)?;
        let id = reg.patient_id.trim();
        if id.is_empty() || id.contains(['/', '?', '&', '#']) || id != reg.patient_id {
            return Err(ServerError::BadRequest(format!("invalid patient id {:?}", reg.patient_id)));
        }
        if self.doctors.contains_key(id) {
            return Err(ServerError::DuplicatePatient(id.to_owned()));
        }
        // Hash outside the state lock.
        let credential = reg.password.as_deref().map(|pw| {
            StoredCredential::new(pw, Role::Patient, Some(id.to_owned()), self.config.password_iterations.max(1))
        });
        let mut state = self.lock_state();
        if state.patients.contains_key(id) {
            return Err(ServerError::DuplicatePatient(id.to_owned()));
        }
        let registered_at = self.now();
        self.commit(
            &mut state,
            Mutation::AddPatient {
                patient_id: id.to_owned(),
                demographics: reg.demographics.clone(),
                registered_at,
                credential,
            },
        )?;
        Ok(summary(&state, id).expect("just inserted"))
    }

    pub fn view_patient(&self, token: Option<&str>, patient_id: &str) -> Result<PatientSummary> {
        self.require_doctor(token)?;
        let state = self.lock_state();
        summary(&state, patient_id).ok_or_else(|| ServerError::UnknownPatient(patient_id.to_owned()))
    }

    pub fn set_status(
        &self,
        token: Option<&str>,
        patient_id: &str,
        status: MonitoringStatus,
    ) -> Result<PatientSummary> {
        self.require_doctor(token)?;
        let mut state = self.lock_state();
        if !state.patients.contains_key(patient_id) {
            return Err(ServerError::UnknownPatient(patient_id.to_owned()));
        }
        self.commit(&mut state, Mutation::SetStatus { patient_id: patient_id.to_owned(), status })?;
        Ok(summary(&state, patient_id).expect("exists"))
    }

    // ---- ingestion ------------------------------------------------------

    /// Stores an observation (once per upload seq), scores it and raises an alert if warranted.
    pub fn enter_data(&self, token: Option<&str>, obs: &Observation) -> Result<Ack> {
        let session = self.session(token)?;
        if !session.owns(&obs.patient_id) {
            return Err(ServerError::Forbidden);
        }
        validate_observation(obs)?;

        let mut state = self.lock_state();
        let record =
            state.patients.get(&obs.patient_id).ok_or_else(|| ServerError::UnknownPatient(obs.patient_id.clone()))?;
        if let Some(prev) = record.stored(obs.seq_upload) {
            let (server_seq, risk) = (prev.server_seq, prev.risk);
            return Ok(Ack {
                server_seq,
                duplicate: true,
                high_risk: state.has_open_alert(&obs.patient_id),
                risk,
                alert_id: None,
            });
        }
        let paused = record.monitoring_status == MonitoringStatus::Paused;

        let now = self.now();
        let risk = risk_score(&self.model, obs);
        let server_seq = state.next_server_seq;
        let alert = if paused {
            None
        } else {
            evaluate_alert(obs, risk, &self.model, &self.config.rules).map(|cause| Alert {
                alert_id: state.next_alert_id,
                patient_id: obs.patient_id.clone(),
                t: now,
                cause,
                risk,
                location: obs.location,
                state: AlertState::Open,
                observation_seq: Some(obs.seq_upload),
            })
        };
        let alert_id = alert.as_ref().map(|a| a.alert_id);
        let stored = StoredObservation { server_seq, received_t: now, risk, observation: obs.clone() };
        self.commit(&mut state, Mutation::EnterData { stored, alert })?;
        if alert_id.is_some() {
            self.alert_signal.notify_all();
        }
        Ok(Ack { server_seq, duplicate: false, high_risk: state.has_open_alert(&obs.patient_id), risk, alert_id })
    }

    /// History slice with `from <= t <= to`, ordered by time.
    pub fn collect_data(
        &self,
        token: Option<&str>,
        patient_id: &str,
        from: Option<f64>,
        to: Option<f64>,
    ) -> Result<Vec<Observation>> {
        self.require_doctor_or_owner(token, patient_id)?;
        let state = self.lock_state();
        let record =
            state.patients.get(patient_id).ok_or_else(|| ServerError::UnknownPatient(patient_id.to_owned()))?;
        let lo = from.unwrap_or(f64::NEG_INFINITY);
        let hi = to.unwrap_or(f64::INFINITY);
        Ok(record
            .history
            .iter()
            .filter(|s| s.observation.t >= lo && s.observation.t <= hi)
            .map(|s| s.observation.clone())
            .collect())
    }

    // ---- clinician info and appointments ------------------------------

    pub fn upload_info(&self, token: Option<&str>, patient_id: &str, info: &InfoUpload) -> Result<InfoAck> {
        let session = self.require_doctor(token)?;
        let mut state = self.lock_state();
        if !state.patients.contains_key(patient_id) {
            return Err(ServerError::UnknownPatient(patient_id.to_owned()));
        }
        let now = self.now();
        let record = |text: &String| {
            if text.trim().is_empty() {
                return Err(ServerError::BadRequest("empty text".into()));
            }
            Ok(InfoRecord { text: text.clone(), author: session.username.clone(), t: now })
        };
        let (item, ack) = match info {
            InfoUpload::Recommendation { text } => (InfoItem::Recommendation(record(text)?), InfoAck { slot_id: None }),
            InfoUpload::Prescription { text } => (InfoItem::Prescription(record(text)?), InfoAck { slot_id: None }),
            InfoUpload::ConsultSlot { start_time, duration } => {
                if !(start_time.is_finite() && duration.is_finite() && *duration > 0.0) {
                    return Err(ServerError::BadRequest("slot needs a finite start and positive duration".into()));
                }
                if let Some(clash) = state
                    .slots
                    .values()
                    .find(|e| e.slot.doctor == session.username && e.slot.overlaps(*start_time, *duration))
                {
                    return Err(ServerError::OverlappingSlot(clash.slot.slot_id.clone()));
                }
                let id = slot_id(state.next_slot_no);
                let slot = ConsultSlot {
                    slot_id: id.clone(),
                    doctor: session.username.clone(),
                    start_time: *start_time,
                    duration: *duration,
                    booked: false,
                };
                (InfoItem::ConsultSlot(slot), InfoAck { slot_id: Some(id) })
            }
        };
        self.commit(&mut state, Mutation::UploadInfo { patient_id: patient_id.to_owned(), item })?;
        Ok(ack)
    }

    pub fn sync_info(&self, token: Option<&str>, patient_id: &str) -> Result<InfoBundle> {
        self.require_doctor_or_owner(token, patient_id)?;
        self.lock_state().info_bundle(patient_id).ok_or_else(|| ServerError::UnknownPatient(patient_id.to_owned()))
    }

    /// Books a consult slot; the check and the booking happen under one lock.
    pub fn book_appointment(&self, token: Option<&str>, req: &AppointmentRequest) -> Result<Booking> {
        self.require_doctor_or_owner(token, &req.patient_id)?;
        let mut state = self.lock_state();
        if !state.patients.contains_key(&req.patient_id) {
            return Err(ServerError::UnknownPatient(req.patient_id.clone()));
        }
        let slot_no = parse_slot_id(&req.slot_id)
            .filter(|n| state.slots.contains_key(n))
            .ok_or_else(|| ServerError::UnknownSlot(req.slot_id.clone()))?;
        if state.slots[&slot_no].slot.booked {
            return Err(ServerError::SlotTaken(req.slot_id.clone()));
        }
        self.commit(&mut state, Mutation::BookSlot { slot_no, patient_id: req.patient_id.clone() })?;
        Ok(Booking { slot_id: req.slot_id.clone(), patient_id: req.patient_id.clone(), confirmed: true })
    }

    // ---- alerts ---------------------------------------------------------

    fn visible(session: &Session, alert: &Alert) -> bool {
        session.role == Role::Doctor || session.owns(&alert.patient_id)
    }

    pub fn list_alerts(&self, token: Option<&str>, filter: Option<AlertState>) -> Result<Vec<Alert>> {
        let session = self.session(token)?;
        let state = self.lock_state();
        Ok(state
            .alerts
            .values()
            .filter(|a| Self::visible(&session, a) && filter.is_none_or(|f| a.state == f))
            .cloned()
            .collect())
    }

    pub fn ack_alert(&self, token: Option<&str>, alert_id: u64) -> Result<Alert> {
        self.require_doctor(token)?;
        let mut state = self.lock_state();
        let alert = state.alerts.get(&alert_id).ok_or(ServerError::UnknownAlert(alert_id))?;
        if alert.state == AlertState::Acknowledged {
            return Err(ServerError::AlreadyAcknowledged(alert_id));
        }
        self.commit(&mut state, Mutation::AckAlert { alert_id })?;
        Ok(state.alerts[&alert_id].clone())
    }

    /// Doctor-initiated alert for a patient.
    pub fn raise_alert(&self, token: Option<&str>, req: &ManualAlertRequest) -> Result<Alert> {
        self.require_doctor(token)?;
        let mut state = self.lock_state();
        let record =
            state.patients.get(&req.patient_id).ok_or_else(|| ServerError::UnknownPatient(req.patient_id.clone()))?;
        let latest = record.latest();
        let alert = Alert {
            alert_id: state.next_alert_id,
            patient_id: req.patient_id.clone(),
            t: self.now(),
            cause: AlertCause::Manual,
            risk: latest.map_or(0.0, |s| s.risk),
            location: latest.and_then(|s| s.observation.location),
            state: AlertState::Open,
            observation_seq: None,
        };
        self.commit(&mut state, Mutation::RaiseAlert { alert: alert.clone() })?;
        self.alert_signal.notify_all();
        Ok(alert)
    }

    /// Alerts created at stream positions `>= after` that the caller may see.
    /// Blocks up to `timeout_ms` while there are none.
    pub fn stream_alerts(&self, token: Option<&str>, after: u64, timeout_ms: u64) -> Result<StreamBatch> {
        let session = self.session(token)?;
        let deadline = Instant::now() + Duration::from_millis(timeout_ms.min(MAX_LONG_POLL_MS));
        let mut state = self.lock_state();
        loop {
            let start = usize::try_from(after).unwrap_or(usize::MAX).min(state.alert_stream.len());
            let alerts: Vec<Alert> = state.alert_stream[start..]
                .iter()
                .map(|id| state.alerts[id].clone())
                .filter(|a| Self::visible(&session, a))
                .collect();
            let cursor = state.alert_stream.len() as u64;
            let now = Instant::now();
            if !alerts.is_empty() || now >= deadline {
                return Ok(StreamBatch { cursor, alerts });
            }
            state = self.alert_signal.wait_timeout(state, deadline - now).expect("state lock poisoned").0;
        }
    }
}

fn validate_observation(obs: &Observation) -> Result<()> {
    let bad = |m: String| Err(ServerError::InvalidObservation(m));
    if !(obs.t.is_finite() && obs.t >= 0.0) {
        return bad(format!("t {}", obs.t));
    }
    if let Some(v) = obs.vitals {
        if v.spo2 > SPO2_MAX {
            return bad(format!("spo2 {}", v.spo2));
        }
        if v.quality == Quality::Ok && !(HR_MIN_BPM..=HR_MAX_BPM).contains(&v.hr) {
            return bad(format!("hr {}", v.hr));
        }
        if !(v.ratio_r.is_finite() && v.ratio_r >= 0.0) {
            return bad(format!("ratio_r {}", v.ratio_r));
        }
    }
    if let Some(loc) = obs.location {
        if !loc.is_valid() {
            return bad(format!("location {loc:?}"));
        }
    }
    Ok(())
}

fn summary(state: &ServerState, patient_id: &str) -> Option<PatientSummary> {
    let p = state.patients.get(patient_id)?;
    let vitals: Vec<_> =
        p.history.iter().filter_map(|s| s.observation.vitals).filter(|v| v.quality == Quality::Ok).collect();
    let mean = |f: fn(&crate::api::Vitals) -> f64| {
        (!vitals.is_empty()).then(|| vitals.iter().map(f).sum::<f64>() / vitals.len() as f64)
    };
    Some(PatientSummary {
        patient_id: p.patient_id.clone(),
        demographics: p.demographics.clone(),
        monitoring_status: p.monitoring_status,
        latest_observation: p.latest().map(|s| s.observation.clone()),
        open_alerts: p
            .alerts
            .iter()
            .filter_map(|id| state.alerts.get(id))
            .filter(|a| a.state == AlertState::Open)
            .cloned()
            .collect(),
        history_stats: HistoryStats {
            count: p.history.len(),
            first_t: p.history.first().map(|s| s.observation.t),
            last_t: p.history.last().map(|s| s.observation.t),
            mean_spo2: mean(|v| f64::from(v.spo2)),
            mean_hr: mean(|v| f64::from(v.hr)),
        },
    })
}
