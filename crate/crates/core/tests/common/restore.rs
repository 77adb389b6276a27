//! Journal and snapshot restore checks.

use serde_json::{json, Value};
use uhs_core::api::{ApiRequest, InfoUpload, ManualAlertRequest, MonitoringStatus, Transport};
use uhs_core::ActivityId;

use super::{config, observation, Fixture, DOCTOR, DOCTOR_PW};

/// Requests whose responses must survive a restart unchanged.
pub fn read_probe(server: &impl Transport, dr: &str, patient: &str, p_tok: &str) -> Vec<Value> {
    let reqs = [
        ApiRequest::get("/api/v1/patients/p1").with_token(Some(dr)),
        ApiRequest::get("/api/v1/patients/p2").with_token(Some(dr)),
        ApiRequest::get("/api/v1/patients/p1/observations").with_token(Some(dr)),
        ApiRequest::get(format!("/api/v1/patients/{patient}/observations?from=2&to=8")).with_token(Some(p_tok)),
        ApiRequest::get("/api/v1/patients/p1/info").with_token(Some(p_tok)),
        ApiRequest::get("/api/v1/alerts").with_token(Some(dr)),
        ApiRequest::get("/api/v1/alerts?state=open").with_token(Some(dr)),
        ApiRequest::get("/api/v1/stream/alerts?after=0").with_token(Some(dr)),
    ];
    reqs.iter()
        .map(|r| {
            let resp = server.send(r).unwrap();
            json!({"status": resp.status, "body": resp.body})
        })
        .collect()
}

pub fn populate(f: &Fixture) {
    let dr = f.doctor_token();
    let p1 = f.add_patient(&dr, "p1");
    f.add_patient(&dr, "p2");
    let c = f.client();
    for seq in 1..=9u64 {
        f.clock.advance(1.0);
        let activity = if seq == 6 { ActivityId::Falling } else { ActivityId::ALL[(seq % 3) as usize] };
        let spo2 = if seq == 8 { 86 } else { 96 };
        c.enter_data(&p1, &observation("p1", seq, seq as f64, activity, Some((spo2, 70 + seq as u16)))).unwrap();
    }
    c.enter_data(&p1, &observation("p1", 4, 4.0, ActivityId::Resting, None)).unwrap();
    c.upload_info(&dr, "p1", &InfoUpload::Recommendation { text: "rest".into() }).unwrap();
    c.upload_info(&dr, "p1", &InfoUpload::ConsultSlot { start_time: 10.0, duration: 5.0 }).unwrap();
    c.upload_info(&dr, "p1", &InfoUpload::ConsultSlot { start_time: 20.0, duration: 5.0 }).unwrap();
    c.book_appointment(&p1, "p1", "s2").unwrap();
    c.set_status(&dr, "p2", MonitoringStatus::Paused).unwrap();
    let first = c.alerts(&dr, None).unwrap()[0].alert_id;
    c.ack_alert(&dr, first).unwrap();
    c.raise_alert(&dr, &ManualAlertRequest { patient_id: "p2".into(), note: Some("call back".into()) }).unwrap();
}

/// Populates a persistent server, restarts it on the same directory and compares
/// state and read responses.
pub fn check_restore(snapshot_every: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let before = {
        let f = Fixture::with_config(config(Some(dir.path()), snapshot_every));
        populate(&f);
        let dr = f.doctor_token();
        let p1 = f.patient_token("p1");
        (read_probe(&*f.server, &dr, "p1", &p1), f.server.state_snapshot())
    };
    let f = Fixture::with_config(config(Some(dir.path()), snapshot_every));
    let dr = f.doctor_token();
    let p1 = f.patient_token("p1");
    if f.server.state_snapshot() != before.1 {
        return Err(format!("snapshot_every={snapshot_every}: restored state differs"));
    }
    if read_probe(&*f.server, &dr, "p1", &p1) != before.0 {
        return Err(format!("snapshot_every={snapshot_every}: restored responses differ"));
    }
    // Tokens are not persisted.
    if f.client().login(DOCTOR, DOCTOR_PW).map_err(|e| e.to_string())?.token == dr {
        return Err("login after restart reissued an old token".into());
    }
    Ok(())
}
