//! Wearable ubiquitous healthcare monitoring, simulated end to end.
//!
//! Three tiers are modelled:
//!
//! - the **sensor layer** ([`synth`], [`sensor`]): deterministic accelerometer and
//!   two-wavelength PPG generators, a threshold activity classifier, ratio-of-ratios
//!   SpO₂ and peak-count heart-rate extraction, and the binary wire frame;
//! - the **body-area link** ([`tdma`]): a slotted TDMA channel with Bernoulli loss,
//!   collision and protocol-violation accounting;
//! - the **gateway and server** ([`base_node`], [`server`]): observation fusion,
//!   delta-suppressed uploads, logistic-regression risk scoring, alerting and a
//!   journal-backed patient registry behind a versioned JSON API ([`api`]).
//!
//! [`scenario`] wires all of them into reproducible runs driven by virtual time.

pub mod api;
pub mod base_node;
pub mod scenario;
pub mod sensor;
pub mod server;
pub mod synth;
pub mod tdma;

pub use sensor::{ActivityId, Quality, SensorFrame, VitalsReading};
