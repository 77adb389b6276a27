//! Maps `/api/v1` requests onto [`HealthServer`] operations.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{HealthServer, Result, ServerError};
use crate::api::{
    AlertState, ApiRequest, ApiResponse, AppointmentRequest, ErrorBody, InfoUpload, LoginRequest, ManualAlertRequest,
    Method, Observation, PatientRegistration, StatusUpdate, Transport, TransportError, API_PREFIX,
};

const VITALS_FIELDS: [&str; 4] = ["spo2", "hr", "ratio_r", "quality"];

/// Splits `path?a=1&b=2` into the path and its raw key/value pairs.
pub fn split_query(full: &str) -> (&str, Vec<(&str, &str)>) {
    match full.split_once('?') {
        None => (full, Vec::new()),
        Some((path, q)) => {
            (path, q.split('&').filter(|kv| !kv.is_empty()).map(|kv| kv.split_once('=').unwrap_or((kv, ""))).collect())
        }
    }
}

fn query<'a>(params: &[(&'a str, &'a str)], key: &str) -> Option<&'a str> {
    params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn parse_param<T: std::str::FromStr>(params: &[(&str, &str)], key: &str) -> Result<Option<T>> {
    query(params, key)
        .map(|v| v.parse::<T>().map_err(|_| ServerError::BadRequest(format!("bad query parameter {key}={v}"))))
        .transpose()
}

fn body<T: DeserializeOwned>(req: &ApiRequest) -> Result<T> {
    let v = req.body.clone().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|e| ServerError::BadRequest(e.to_string()))
}

fn observation_body(req: &ApiRequest) -> Result<Observation> {
    let v = req.body.clone().unwrap_or(Value::Null);
    let obs: Observation =
        serde_json::from_value(v.clone()).map_err(|e| ServerError::InvalidObservation(e.to_string()))?;
    // Vitals fields travel together; a partial set would silently vanish otherwise.
    if obs.vitals.is_none() {
        if let Some(present) = VITALS_FIELDS.iter().find(|f| v.get(**f).is_some()) {
            return Err(ServerError::InvalidObservation(format!("partial vitals: {present} without the rest")));
        }
    }
    Ok(obs)
}

fn ok<T: Serialize>(status: u16, v: T) -> Result<ApiResponse> {
    Ok(ApiResponse { status, body: serde_json::to_value(v).expect("API types serialize") })
}

pub fn error_response(e: &ServerError) -> ApiResponse {
    let body = ErrorBody { error: e.code().to_owned(), message: e.to_string() };
    ApiResponse { status: e.status(), body: serde_json::to_value(body).expect("error body serializes") }
}

/// Handles one API request. Never panics on client input.
pub fn handle(server: &HealthServer, req: &ApiRequest) -> ApiResponse {
    dispatch(server, req).unwrap_or_else(|e| error_response(&e))
}

fn dispatch(server: &HealthServer, req: &ApiRequest) -> Result<ApiResponse> {
    let (path, params) = split_query(&req.path);
    let rest = path.strip_prefix(API_PREFIX).ok_or(ServerError::NotFound)?;
    let segs: Vec<&str> = rest.trim_end_matches('/').split('/').skip(1).collect();
    let tok = req.token.as_deref();
    use Method::{Get, Post};
    match (req.method, segs.as_slice()) {
        (Post, ["auth", "login"]) => {
            let b: LoginRequest = body(req)?;
            ok(200, server.authenticate(&b.username, &b.password)?)
        }
        (Post, ["patients"]) => ok(201, server.add_patient(tok, &body::<PatientRegistration>(req)?)?),
        (Get, ["patients", id]) => ok(200, server.view_patient(tok, id)?),
        (Post, ["patients", id, "status"]) => {
            let b: StatusUpdate = body(req)?;
            ok(200, server.set_status(tok, id, b.status)?)
        }
        (Get, ["patients", id, "observations"]) => {
            let from = parse_param::<f64>(&params, "from")?;
            let to = parse_param::<f64>(&params, "to")?;
            ok(200, server.collect_data(tok, id, from, to)?)
        }
        (Get, ["patients", id, "info"]) => ok(200, server.sync_info(tok, id)?),
        (Post, ["patients", id, "info"]) => ok(201, server.upload_info(tok, id, &body::<InfoUpload>(req)?)?),
        (Post, ["observations"]) => {
            // Authenticate before looking at the body so bad tokens always read as 401.
            server.session(tok)?;
            ok(200, server.enter_data(tok, &observation_body(req)?)?)
        }
        (Post, ["appointments"]) => ok(201, server.book_appointment(tok, &body::<AppointmentRequest>(req)?)?),
        (Get, ["alerts"]) => {
            let state = match query(&params, "state") {
                None | Some("") | Some("all") => None,
                Some("open") => Some(AlertState::Open),
                Some("acknowledged") => Some(AlertState::Acknowledged),
                Some(other) => return Err(ServerError::BadRequest(format!("unknown alert state {other}"))),
            };
            ok(200, server.list_alerts(tok, state)?)
        }
        (Post, ["alerts"]) => ok(201, server.raise_alert(tok, &body::<ManualAlertRequest>(req)?)?),
        (Post, ["alerts", id, "ack"]) => {
            let id = id.parse().map_err(|_| ServerError::BadRequest(format!("bad alert id {id}")))?;
            ok(200, server.ack_alert(tok, id)?)
        }
        (Get, ["stream", "alerts"]) => {
            let after = parse_param::<u64>(&params, "after")?.unwrap_or(0);
            let timeout = parse_param::<u64>(&params, "timeout_ms")?.unwrap_or(0);
            ok(200, server.stream_alerts(tok, after, timeout)?)
        }
        (
            _,
            ["auth", "login"]
            | ["patients"]
            | ["patients", _]
            | ["patients", _, "status" | "observations"]
            | ["observations"]
            | ["appointments"]
            | ["alerts", _, "ack"]
            | ["stream", "alerts"],
        ) => Err(ServerError::MethodNotAllowed),
        _ => Err(ServerError::NotFound),
    }
}

impl Transport for HealthServer {
    fn send(&self, req: &ApiRequest) -> std::result::Result<ApiResponse, TransportError> {
        Ok(handle(self, req))
    }
}
