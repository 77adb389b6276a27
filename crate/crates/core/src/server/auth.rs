//! Salted password hashing and opaque bearer tokens.

use std::collections::HashMap;

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::api::Role;

const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;
/// 256 bits of OS-seeded randomness per token.
const TOKEN_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCredential {
    pub role: Role,
    /// Patient the login belongs to; `None` for doctors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    pub salt: String,
    pub hash: String,
    pub iterations: u32,
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; HASH_LEN] {
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    out
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl StoredCredential {
    pub fn new(password: &str, role: Role, patient_id: Option<String>, iterations: u32) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        let hash = derive(password, &salt, iterations);
        Self { role, patient_id, salt: hex::encode(salt), hash: hex::encode(hash), iterations }
    }

    pub fn verify(&self, password: &str) -> bool {
        let (Ok(salt), Ok(expected)) = (hex::decode(&self.salt), hex::decode(&self.hash)) else {
            return false;
        };
        constant_time_eq(&derive(password, &salt, self.iterations), &expected)
    }
}

/// Checks a login against an optional credential, spending the same work
/// whether or not the user exists.
pub fn verify_login(cred: Option<&StoredCredential>, password: &str, decoy: &StoredCredential) -> bool {
    match cred {
        Some(c) => c.verify(password),
        None => {
            let _ = decoy.verify(password);
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub username: String,
    pub role: Role,
    pub patient_id: Option<String>,
    pub expires_at: f64,
}

impl Session {
    pub fn owns(&self, patient_id: &str) -> bool {
        self.role == Role::Patient && self.patient_id.as_deref() == Some(patient_id)
    }
}

#[derive(Debug, Default)]
pub struct TokenStore {
    sessions: HashMap<String, Session>,
}

impl TokenStore {
    pub fn issue(&mut self, session: Session) -> String {
        let mut bytes = [0u8; TOKEN_BYTES];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        self.sessions.insert(token.clone(), session);
        token
    }

    /// Valid, unexpired session for a token. Expired sessions are dropped.
    pub fn resolve(&mut self, token: &str, now: f64) -> Option<Session> {
        let session = self.sessions.get(token)?;
        if now >= session.expires_at {
            self.sessions.remove(token);
            return None;
        }
        Some(session.clone())
    }
}
