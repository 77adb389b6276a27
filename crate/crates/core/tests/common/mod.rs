#![allow(dead_code)]

pub mod authz;
pub mod restore;

use std::path::Path;
use std::sync::Arc;

use uhs_core::api::{ApiClient, Demographics, Observation, PatientRegistration, Role, Vitals};
use uhs_core::server::{HealthServer, ManualClock, ServerConfig, UserConfig};
use uhs_core::{ActivityId, Quality};

pub const DOCTOR: &str = "dr-house";
pub const DOCTOR_PW: &str = "vicodin";
pub const TOKEN_TTL_S: f64 = 600.0;

pub struct Fixture {
    pub server: Arc<HealthServer>,
    pub clock: Arc<ManualClock>,
}

pub fn config(data_dir: Option<&Path>, snapshot_every: u64) -> ServerConfig {
    ServerConfig {
        data_dir: data_dir.map(Path::to_path_buf),
        snapshot_every,
        token_ttl_s: TOKEN_TTL_S,
        password_iterations: 1,
        users: vec![UserConfig { username: DOCTOR.into(), password: DOCTOR_PW.into(), role: Role::Doctor }],
        ..ServerConfig::default()
    }
}

impl Fixture {
    pub fn new() -> Self {
        Self::with_config(config(None, 0))
    }

    pub fn with_config(cfg: ServerConfig) -> Self {
        let clock = Arc::new(ManualClock::new(1000.0));
        let server = Arc::new(HealthServer::new(cfg, clock.clone()).expect("server starts"));
        Self { server, clock }
    }

    pub fn client(&self) -> ApiClient<Arc<HealthServer>> {
        ApiClient::new(self.server.clone())
    }

    pub fn doctor_token(&self) -> String {
        self.client().login(DOCTOR, DOCTOR_PW).expect("doctor login").token
    }

    /// Registers a patient whose password is `pw-<id>` and returns their token.
    pub fn add_patient(&self, doctor: &str, id: &str) -> String {
        let reg = PatientRegistration {
            patient_id: id.into(),
            demographics: Demographics { name: format!("Patient {id}"), year_of_birth: 1948 },
            password: Some(format!("pw-{id}")),
        };
        self.client().add_patient(doctor, &reg).expect("register patient");
        self.patient_token(id)
    }

    pub fn patient_token(&self, id: &str) -> String {
        self.client().login(id, &format!("pw-{id}")).expect("patient login").token
    }
}

pub fn observation(patient: &str, seq: u64, t: f64, activity: ActivityId, vitals: Option<(u8, u16)>) -> Observation {
    Observation {
        patient_id: patient.into(),
        seq_upload: seq,
        t,
        activity,
        vitals: vitals.map(|(spo2, hr)| Vitals {
            spo2,
            hr,
            ratio_r: (110.0 - f64::from(spo2)) / 25.0,
            quality: Quality::Ok,
        }),
        location: None,
    }
}
