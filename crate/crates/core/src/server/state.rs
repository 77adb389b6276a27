//! Registry state and the mutations that change it. Every change goes through
//! [`ServerState::apply`], both live and when replaying the journal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::auth::StoredCredential;
use crate::api::{Alert, AlertState, ConsultSlot, Demographics, InfoBundle, InfoRecord, MonitoringStatus, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredObservation {
    pub server_seq: u64,
    pub received_t: f64,
    pub risk: f64,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub demographics: Demographics,
    pub monitoring_status: MonitoringStatus,
    pub registered_at: f64,
    /// Ordered by (t, seq).
    pub history: Vec<StoredObservation>,
    /// Upload seq → server seq, for deduplication.
    pub seen: BTreeMap<u64, u64>,
    pub alerts: Vec<u64>,
    pub recommendations: Vec<InfoRecord>,
    pub prescriptions: Vec<InfoRecord>,
}

impl PatientRecord {
    pub fn stored(&self, seq_upload: u64) -> Option<&StoredObservation> {
        let server_seq = *self.seen.get(&seq_upload)?;
        self.history.iter().find(|s| s.server_seq == server_seq)
    }

    pub fn latest(&self) -> Option<&StoredObservation> {
        self.history.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub slot: ConsultSlot,
    pub booked_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InfoItem {
    Recommendation(InfoRecord),
    Prescription(InfoRecord),
    ConsultSlot(ConsultSlot),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AddPatient {
        patient_id: String,
        demographics: Demographics,
        registered_at: f64,
        credential: Option<StoredCredential>,
    },
    EnterData {
        stored: StoredObservation,
        alert: Option<Alert>,
    },
    UploadInfo {
        patient_id: String,
        item: InfoItem,
    },
    BookSlot {
        slot_no: u64,
        patient_id: String,
    },
    AckAlert {
        alert_id: u64,
    },
    RaiseAlert {
        alert: Alert,
    },
    SetStatus {
        patient_id: String,
        status: MonitoringStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub mutation: Mutation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    /// Sequence number of the last applied journal entry.
    pub journal_seq: u64,
    pub patients: BTreeMap<String, PatientRecord>,
    pub credentials: BTreeMap<String, StoredCredential>,
    pub slots: BTreeMap<u64, SlotEntry>,
    pub alerts: BTreeMap<u64, Alert>,
    /// Alert ids in creation order; a stream cursor indexes into it.
    pub alert_stream: Vec<u64>,
    pub next_server_seq: u64,
    pub next_alert_id: u64,
    pub next_slot_no: u64,
}

pub fn slot_id(slot_no: u64) -> String {
    format!("s{slot_no}")
}

pub fn parse_slot_id(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl ServerState {
    pub fn new() -> Self {
        Self { next_server_seq: 1, next_alert_id: 1, next_slot_no: 1, ..Default::default() }
    }

    pub fn info_bundle(&self, patient_id: &str) -> Option<InfoBundle> {
        let p = self.patients.get(patient_id)?;
        Some(InfoBundle {
            recommendations: p.recommendations.clone(),
            prescriptions: p.prescriptions.clone(),
            consult_slots: self.slots.values().map(|e| e.slot.clone()).collect(),
        })
    }

    pub fn has_open_alert(&self, patient_id: &str) -> bool {
        self.patients
            .get(patient_id)
            .is_some_and(|p| p.alerts.iter().any(|id| self.alerts.get(id).is_some_and(|a| a.state == AlertState::Open)))
    }

    /// Applies a mutation that has already been validated.
    pub fn apply(&mut self, seq: u64, m: &Mutation) {
        self.journal_seq = seq;
        match m {
            Mutation::AddPatient { patient_id, demographics, registered_at, credential } => {
                self.patients.insert(
                    patient_id.clone(),
                    PatientRecord {
                        patient_id: patient_id.clone(),
                        demographics: demographics.clone(),
                        monitoring_status: MonitoringStatus::Active,
                        registered_at: *registered_at,
                        history: Vec::new(),
                        seen: BTreeMap::new(),
                        alerts: Vec::new(),
                        recommendations: Vec::new(),
                        prescriptions: Vec::new(),
                    },
                );
                if let Some(c) = credential {
                    self.credentials.insert(patient_id.clone(), c.clone());
                }
            }
            Mutation::EnterData { stored, alert } => {
                let obs = &stored.observation;
                let p = self.patients.get_mut(&obs.patient_id).expect("validated patient");
                p.seen.insert(obs.seq_upload, stored.server_seq);
                let key = (obs.t, obs.seq_upload);
                let at = p.history.partition_point(|s| (s.observation.t, s.observation.seq_upload) <= key);
                p.history.insert(at, stored.clone());
                self.next_server_seq = self.next_server_seq.max(stored.server_seq + 1);
                if let Some(a) = alert {
                    self.insert_alert(a.clone());
                }
            }
            Mutation::UploadInfo { patient_id, item } => match item {
                InfoItem::Recommendation(r) => {
                    self.patients.get_mut(patient_id).expect("validated patient").recommendations.push(r.clone())
                }
                InfoItem::Prescription(r) => {
                    self.patients.get_mut(patient_id).expect("validated patient").prescriptions.push(r.clone())
                }
                InfoItem::ConsultSlot(slot) => {
                    let no = parse_slot_id(&slot.slot_id).expect("server-assigned slot id");
                    self.slots.insert(no, SlotEntry { slot: slot.clone(), booked_by: None });
                    self.next_slot_no = self.next_slot_no.max(no + 1);
                }
            },
            Mutation::BookSlot { slot_no, patient_id } => {
                let e = self.slots.get_mut(slot_no).expect("validated slot");
                e.slot.booked = true;
                e.booked_by = Some(patient_id.clone());
            }
            Mutation::AckAlert { alert_id } => {
                self.alerts.get_mut(alert_id).expect("validated alert").state = AlertState::Acknowledged;
            }
            Mutation::RaiseAlert { alert } => self.insert_alert(alert.clone()),
            Mutation::SetStatus { patient_id, status } => {
                self.patients.get_mut(patient_id).expect("validated patient").monitoring_status = *status;
            }
        }
    }

    fn insert_alert(&mut self, alert: Alert) {
        if let Some(p) = self.patients.get_mut(&alert.patient_id) {
            p.alerts.push(alert.alert_id);
        }
        self.next_alert_id = self.next_alert_id.max(alert.alert_id + 1);
        self.alert_stream.push(alert.alert_id);
        self.alerts.insert(alert.alert_id, alert);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::ActivityId;

    fn obs(seq: u64, t: f64) -> StoredObservation {
        StoredObservation {
            server_seq: seq + 100,
            received_t: t,
            risk: 0.1,
            observation: Observation {
                patient_id: "p".into(),
                seq_upload: seq,
                t,
                activity: ActivityId::Resting,
                vitals: None,
                location: None,
            },
        }
    }

    #[test]
    fn history_stays_ordered_by_time_then_seq() {
        let mut s = ServerState::new();
        s.apply(
            1,
            &Mutation::AddPatient {
                patient_id: "p".into(),
                demographics: Demographics { name: "A".into(), year_of_birth: 1950 },
                registered_at: 0.0,
                credential: None,
            },
        );
        for (i, (seq, t)) in [(3, 2.0), (1, 1.0), (2, 2.0), (4, 0.5)].into_iter().enumerate() {
            s.apply(i as u64 + 2, &Mutation::EnterData { stored: obs(seq, t), alert: None });
        }
        let order: Vec<u64> = s.patients["p"].history.iter().map(|h| h.observation.seq_upload).collect();
        assert_eq!(order, vec![4, 1, 2, 3]);
        assert_eq!(s.patients["p"].stored(2).unwrap().server_seq, 102);
        assert_eq!(s.journal_seq, 5);
    }

    #[test]
    fn journal_entry_is_one_flat_object() {
        let e = JournalEntry { seq: 9, mutation: Mutation::AckAlert { alert_id: 3 } };
        let line = serde_json::to_string(&e).unwrap();
        assert_eq!(line, r#"{"seq":9,"op":"ack_alert","alert_id":3}"#);
        assert_eq!(serde_json::from_str::<JournalEntry>(&line).unwrap(), e);
    }

    #[test]
    fn slot_ids() {
        assert_eq!(slot_id(12), "s12");
        assert_eq!(parse_slot_id("s12"), Some(12));
        assert_eq!(parse_slot_id("x12"), None);
    }
}
