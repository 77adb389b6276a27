//! Versioned JSON API shared by the health server, the base node and the CLI.
//!
//! Requests travel through a [`Transport`]: in-process for embedded runs, HTTP
//! for a standalone server. Either way the bodies are the same JSON documents.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sensor::{ActivityId, Quality};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Doctor,
    Patient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoLocation {
    pub lat: f64,
    pub lon: f64,
    pub fix_time: f64,
}

impl GeoLocation {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) && self.fix_time.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    pub spo2: u8,
    pub hr: u16,
    pub ratio_r: f64,
    pub quality: Quality,
}

/// A fused patient state as uploaded by a base node. On the wire the vitals
/// fields sit at the top level and are absent together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub patient_id: String,
    #[serde(rename = "seq")]
    pub seq_upload: u64,
    pub t: f64,
    pub activity: ActivityId,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub vitals: Option<Vitals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoLocation>,
}

impl Observation {
    /// The clinically relevant content, without identity, time or location.
    pub fn state(&self) -> ObservedState {
        ObservedState { activity: self.activity, vitals: self.vitals.map(|v| (v.spo2, v.hr, v.quality)) }
    }
}

/// What the delta gate compares and what the server replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservedState {
    pub activity: ActivityId,
    pub vitals: Option<(u8, u16, Quality)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub role: Role,
    pub expires_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub name: String,
    pub year_of_birth: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRegistration {
    pub patient_id: String,
    #[serde(flatten)]
    pub demographics: Demographics,
    /// Creates a patient login (username = patient id) when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitoringStatus {
    Active,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub server_seq: u64,
    pub duplicate: bool,
    /// Set while the patient has an open alert; the base node then attaches location.
    pub high_risk: bool,
    pub risk: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoRecord {
    pub text: String,
    pub author: String,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultSlot {
    pub slot_id: String,
    pub doctor: String,
    pub start_time: f64,
    pub duration: f64,
    pub booked: bool,
}

impl ConsultSlot {
    pub fn overlaps(&self, start_time: f64, duration: f64) -> bool {
        self.start_time < start_time + duration && start_time < self.start_time + self.duration
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InfoBundle {
    pub recommendations: Vec<InfoRecord>,
    pub prescriptions: Vec<InfoRecord>,
    pub consult_slots: Vec<ConsultSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfoUpload {
    Recommendation { text: String },
    Prescription { text: String },
    ConsultSlot { start_time: f64, duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoAck {
    /// Assigned id for consult slots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppointmentRequest {
    pub patient_id: String,
    pub slot_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booking {
    pub slot_id: String,
    pub patient_id: String,
    pub confirmed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertCause {
    RuleFall,
    RuleSpo2Low,
    RuleHrOutOfBand,
    ModelRisk,
    /// Raised by a doctor through the alert endpoint.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertState {
    Open,
    Acknowledged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: u64,
    pub patient_id: String,
    pub t: f64,
    pub cause: AlertCause,
    pub risk: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoLocation>,
    pub state: AlertState,
    /// Upload sequence of the observation that triggered it, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualAlertRequest {
    pub patient_id: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusUpdate {
    pub status: MonitoringStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryStats {
    pub count: usize,
    pub first_t: Option<f64>,
    pub last_t: Option<f64>,
    pub mean_spo2: Option<f64>,
    pub mean_hr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub demographics: Demographics,
    pub monitoring_status: MonitoringStatus,
    pub latest_observation: Option<Observation>,
    pub open_alerts: Vec<Alert>,
    pub history_stats: HistoryStats,
}

/// One entry of the long-poll alert stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamBatch {
    pub cursor: u64,
    pub alerts: Vec<Alert>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub method: Method,
    /// Full path including the `/api/v1` prefix and any query string.
    pub path: String,
    pub token: Option<String>,
    pub body: Option<Value>,
}

impl ApiRequest {
    pub fn get(path: impl Into<String>) -> Self {
        Self { method: Method::Get, path: path.into(), token: None, body: None }
    }

    pub fn post(path: impl Into<String>, body: Value) -> Self {
        Self { method: Method::Post, path: path.into(), token: None, body: Some(body) }
    }

    pub fn with_token(mut self, token: Option<&str>) -> Self {
        self.token = token.map(str::to_owned);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Moves one request to a health server and back.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ApiRequest) -> Result<ApiResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, req: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(req)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, req: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(req)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("server returned {status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn is_unauthorized(&self) -> bool {
        matches!(self.status(), Some(401 | 403))
    }
}

fn path(rest: &str) -> String {
    format!("{API_PREFIX}{rest}")
}

/// Typed calls over any transport.
pub struct ApiClient<T: Transport> {
    transport: T,
}

impl<T: Transport> ApiClient<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    pub fn call<R: DeserializeOwned>(&self, req: ApiRequest) -> Result<R, ClientError> {
        let resp = self.transport.send(&req)?;
        if !(200..300).contains(&resp.status) {
            let err: ErrorBody = serde_json::from_value(resp.body)
                .unwrap_or(ErrorBody { error: "unknown".into(), message: String::new() });
            return Err(ClientError::Api { status: resp.status, code: err.error, message: err.message });
        }
        serde_json::from_value(resp.body).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn to_json<S: Serialize>(v: &S) -> Value {
        serde_json::to_value(v).expect("API types serialize")
    }

    pub fn login(&self, username: &str, password: &str) -> Result<LoginResponse, ClientError> {
        let body = LoginRequest { username: username.into(), password: password.into() };
        self.call(ApiRequest::post(path("/auth/login"), Self::to_json(&body)))
    }

    pub fn add_patient(&self, token: &str, reg: &PatientRegistration) -> Result<PatientSummary, ClientError> {
        self.call(ApiRequest::post(path("/patients"), Self::to_json(reg)).with_token(Some(token)))
    }

    pub fn view_patient(&self, token: &str, patient_id: &str) -> Result<PatientSummary, ClientError> {
        self.call(ApiRequest::get(path(&format!("/patients/{patient_id}"))).with_token(Some(token)))
    }

    pub fn set_status(
        &self,
        token: &str,
        patient_id: &str,
        status: MonitoringStatus,
    ) -> Result<PatientSummary, ClientError> {
        let body = Self::to_json(&StatusUpdate { status });
        self.call(ApiRequest::post(path(&format!("/patients/{patient_id}/status")), body).with_token(Some(token)))
    }

    pub fn enter_data(&self, token: &str, obs: &Observation) -> Result<Ack, ClientError> {
        self.call(ApiRequest::post(path("/observations"), Self::to_json(obs)).with_token(Some(token)))
    }

    pub fn collect_data(
        &self,
        token: &str,
        patient_id: &str,
        from: Option<f64>,
        to: Option<f64>,
    ) -> Result<Vec<Observation>, ClientError> {
        let mut query = Vec::new();
        if let Some(f) = from {
            query.push(format!("from={f}"));
        }
        if let Some(t) = to {
            query.push(format!("to={t}"));
        }
        let q = if query.is_empty() { String::new() } else { format!("?{}", query.join("&")) };
        self.call(ApiRequest::get(path(&format!("/patients/{patient_id}/observations{q}"))).with_token(Some(token)))
    }

    pub fn get_info(&self, token: &str, patient_id: &str) -> Result<InfoBundle, ClientError> {
        self.call(ApiRequest::get(path(&format!("/patients/{patient_id}/info"))).with_token(Some(token)))
    }

    pub fn upload_info(&self, token: &str, patient_id: &str, info: &InfoUpload) -> Result<InfoAck, ClientError> {
        let body = Self::to_json(info);
        self.call(ApiRequest::post(path(&format!("/patients/{patient_id}/info")), body).with_token(Some(token)))
    }

    pub fn book_appointment(&self, token: &str, patient_id: &str, slot_id: &str) -> Result<Booking, ClientError> {
        let body = Self::to_json(&AppointmentRequest { patient_id: patient_id.into(), slot_id: slot_id.into() });
        self.call(ApiRequest::post(path("/appointments"), body).with_token(Some(token)))
    }

    pub fn alerts(&self, token: &str, state: Option<AlertState>) -> Result<Vec<Alert>, ClientError> {
        let q = match state {
            Some(AlertState::Open) => "?state=open",
            Some(AlertState::Acknowledged) => "?state=acknowledged",
            None => "",
        };
        self.call(ApiRequest::get(path(&format!("/alerts{q}"))).with_token(Some(token)))
    }

    pub fn ack_alert(&self, token: &str, alert_id: u64) -> Result<Alert, ClientError> {
        self.call(ApiRequest::post(path(&format!("/alerts/{alert_id}/ack")), Value::Null).with_token(Some(token)))
    }

    pub fn raise_alert(&self, token: &str, req: &ManualAlertRequest) -> Result<Alert, ClientError> {
        self.call(ApiRequest::post(path("/alerts"), Self::to_json(req)).with_token(Some(token)))
    }

    pub fn stream_alerts(&self, token: &str, after: u64, timeout_ms: u64) -> Result<StreamBatch, ClientError> {
        let p = path(&format!("/stream/alerts?after={after}&timeout_ms={timeout_ms}"));
        self.call(ApiRequest::get(p).with_token(Some(token)))
    }
}
