//! Endpoint × caller authorization matrix.

use serde_json::{json, Value};
use uhs_core::api::{ApiRequest, InfoUpload, ManualAlertRequest};
use uhs_core::server::handle;
use uhs_core::ActivityId;

use super::{observation, Fixture, TOKEN_TTL_S};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Caller {
    Anonymous,
    Garbage,
    Expired,
    Doctor,
    Owner,
    OtherPatient,
}

pub const CALLERS: [Caller; 6] =
    [Caller::Anonymous, Caller::Garbage, Caller::Expired, Caller::Doctor, Caller::Owner, Caller::OtherPatient];

#[derive(Debug, Clone, Copy)]
pub enum Access {
    Doctor,
    DoctorOrOwner,
    Owner,
    AnyAuthenticated,
}

pub fn allowed(access: Access, caller: Caller) -> bool {
    match (access, caller) {
        (_, Caller::Anonymous | Caller::Garbage | Caller::Expired) => false,
        (Access::AnyAuthenticated, _) => true,
        (Access::Doctor, c) => c == Caller::Doctor,
        (Access::DoctorOrOwner, c) => matches!(c, Caller::Doctor | Caller::Owner),
        (Access::Owner, c) => c == Caller::Owner,
    }
}

pub fn endpoints() -> Vec<(&'static str, ApiRequest, Access)> {
    let obs = serde_json::to_value(observation("p1", 50, 5.0, ActivityId::Walking, Some((96, 80)))).unwrap();
    vec![
        (
            "add patient",
            ApiRequest::post("/api/v1/patients", json!({"patient_id": "p9", "name": "N", "year_of_birth": 1960})),
            Access::Doctor,
        ),
        ("view patient", ApiRequest::get("/api/v1/patients/p1"), Access::Doctor),
        ("set status", ApiRequest::post("/api/v1/patients/p1/status", json!({"status": "paused"})), Access::Doctor),
        ("enter data", ApiRequest::post("/api/v1/observations", obs), Access::Owner),
        ("collect data", ApiRequest::get("/api/v1/patients/p1/observations?from=0&to=100"), Access::DoctorOrOwner),
        ("sync info", ApiRequest::get("/api/v1/patients/p1/info"), Access::DoctorOrOwner),
        (
            "upload info",
            ApiRequest::post("/api/v1/patients/p1/info", json!({"kind": "recommendation", "text": "walk daily"})),
            Access::Doctor,
        ),
        (
            "book appointment",
            ApiRequest::post("/api/v1/appointments", json!({"patient_id": "p1", "slot_id": "s1"})),
            Access::DoctorOrOwner,
        ),
        ("list alerts", ApiRequest::get("/api/v1/alerts?state=open"), Access::AnyAuthenticated),
        ("raise alert", ApiRequest::post("/api/v1/alerts", json!({"patient_id": "p1"})), Access::Doctor),
        ("ack alert", ApiRequest::post("/api/v1/alerts/1/ack", Value::Null), Access::Doctor),
        ("stream alerts", ApiRequest::get("/api/v1/stream/alerts?after=0&timeout_ms=0"), Access::AnyAuthenticated),
    ]
}

/// Two patients, one open alert on p1, one consult slot.
pub fn seeded() -> (Fixture, String, String, String) {
    let f = Fixture::new();
    let dr = f.doctor_token();
    let p1 = f.add_patient(&dr, "p1");
    let p2 = f.add_patient(&dr, "p2");
    let c = f.client();
    c.enter_data(&p1, &observation("p1", 1, 1.0, ActivityId::Resting, Some((97, 70)))).unwrap();
    c.raise_alert(&dr, &ManualAlertRequest { patient_id: "p1".into(), note: None }).unwrap();
    c.upload_info(&dr, "p1", &InfoUpload::ConsultSlot { start_time: 5000.0, duration: 900.0 }).unwrap();
    (f, dr, p1, p2)
}

/// Runs every endpoint as every caller on a fresh server. Returns the number of
/// cells checked, or the first cell that disagrees with the expected outcome.
pub fn check_matrix() -> Result<usize, String> {
    let mut checked = 0;
    for (name, req, access) in endpoints() {
        for caller in CALLERS {
            let (f, dr, p1, p2) = seeded();
            let token = match caller {
                Caller::Anonymous => None,
                Caller::Garbage => Some("00".repeat(32)),
                Caller::Expired => {
                    f.clock.advance(TOKEN_TTL_S + 1.0);
                    Some(dr.clone())
                }
                Caller::Doctor => Some(dr.clone()),
                Caller::Owner => Some(p1.clone()),
                Caller::OtherPatient => Some(p2.clone()),
            };
            let resp = handle(&f.server, &req.clone().with_token(token.as_deref()));
            let ok = match caller {
                Caller::Anonymous | Caller::Garbage | Caller::Expired => resp.status == 401,
                _ if allowed(access, caller) => (200..300).contains(&resp.status),
                _ => resp.status == 403,
            };
            if !ok {
                return Err(format!("{name} as {caller:?}: {} {}", resp.status, resp.body));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
