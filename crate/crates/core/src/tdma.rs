//! Slotted TDMA link between body sensors and the base node.
//!
//! Time is divided into superframes of `superframe_slots` slots. Slot 0 is the
//! beacon; every registered node owns one data slot and may transmit a single
//! frame at the start of it. Frames offered in any other slot are dropped as
//! protocol violations. Two compliant frames in one slot (only possible when a
//! test forces a shared assignment) collide and are both lost. A lone frame is
//! delivered unless an independent Bernoulli loss draw fires.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::SensorFrame;

pub const BEACON_SLOT: u16 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdmaError {
    #[error("no free data slot for node {0}")]
    CapacityExceeded(u16),
    #[error("node {0} is already registered")]
    DuplicateNode(u16),
    #[error("node {0} is not registered")]
    UnregisteredNode(u16),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmaSchedule {
    superframe_slots: u16,
    slot_duration_ms: u32,
    assignments: BTreeMap<u16, u16>,
}

impl Default for TdmaSchedule {
    fn default() -> Self {
        Self { superframe_slots: 9, slot_duration_ms: 20, assignments: BTreeMap::new() }
    }
}

impl TdmaSchedule {
    pub fn new(superframe_slots: u16, slot_duration_ms: u32) -> Result<Self, TdmaError> {
        if superframe_slots < 2 {
            return Err(TdmaError::InvalidSchedule("need the beacon slot and at least one data slot".into()));
        }
        if slot_duration_ms == 0 {
            return Err(TdmaError::InvalidSchedule("slot duration must be positive".into()));
        }
        Ok(Self { superframe_slots, slot_duration_ms, assignments: BTreeMap::new() })
    }

    pub fn superframe_slots(&self) -> u16 {
        self.superframe_slots
    }

    pub fn slot_duration_ms(&self) -> u32 {
        self.slot_duration_ms
    }

    pub fn superframe_ms(&self) -> u64 {
        u64::from(self.superframe_slots) * u64::from(self.slot_duration_ms)
    }

    pub fn slot_start_ms(&self, at: SlotTime) -> u64 {
        at.superframe * self.superframe_ms() + u64::from(at.slot) * u64::from(self.slot_duration_ms)
    }

    pub fn slot_of(&self, node_id: u16) -> Option<u16> {
        self.assignments.get(&node_id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<u16, u16> {
        &self.assignments
    }

    pub fn nodes_in_slot(&self, slot: u16) -> impl Iterator<Item = u16> + '_ {
        self.assignments.iter().filter(move |(_, &s)| s == slot).map(|(&n, _)| n)
    }

    /// Assigns the lowest free data slot to a new node.
    pub fn register_node(&mut self, node_id: u16) -> Result<u16, TdmaError> {
        if self.assignments.contains_key(&node_id) {
            return Err(TdmaError::DuplicateNode(node_id));
        }
        let slot = (1..self.superframe_slots)
            .find(|s| !self.assignments.values().any(|used| used == s))
            .ok_or(TdmaError::CapacityExceeded(node_id))?;
        self.assignments.insert(node_id, slot);
        Ok(slot)
    }

    /// Fault injection: pins a node to a slot without the injectivity check.
    pub fn force_assign(&mut self, node_id: u16, slot: u16) -> Result<(), TdmaError> {
        if slot == BEACON_SLOT || slot >= self.superframe_slots {
            return Err(TdmaError::InvalidSchedule(format!("slot {slot} is not a data slot")));
        }
        self.assignments.insert(node_id, slot);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub loss_probability: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { loss_probability: 0.0, seed: 0 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), TdmaError> {
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(TdmaError::InvalidConfig(format!("loss_probability {} outside [0, 1]", self.loss_probability)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotTime {
    pub superframe: u64,
    pub slot: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Delivered,
    Lost,
    Collision,
    Idle,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Delivered => "delivered",
            Self::Lost => "lost",
            Self::Collision => "collision",
            Self::Idle => "idle",
        }
    }
}

/// A frame put on the air, with the time it entered the node's queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub node_id: u16,
    pub frame: SensorFrame,
    pub enqueued_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvent {
    pub slot_time: SlotTime,
    pub start_ms: u64,
    pub kind: EventKind,
    /// Frames sent by the slot's owner(s). `kind` describes their fate.
    pub frames: Vec<Transmission>,
    /// Frames sent outside their owner's slot, all dropped.
    pub violations: Vec<Transmission>,
}

impl ChannelEvent {
    pub fn delivered(&self) -> Option<&Transmission> {
        match self.kind {
            EventKind::Delivered => self.frames.first(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub offered: u64,
    pub delivered: u64,
    pub lost: u64,
    pub collided: u64,
    pub violation_dropped: u64,
    /// Replaced by a newer frame before reaching the air (latest-wins queues
    /// only); never offered, so outside the conservation identity.
    pub superseded: u64,
}

impl NodeStats {
    pub fn is_conserved(&self) -> bool {
        self.offered == self.delivered + self.lost + self.collided + self.violation_dropped
    }

    pub fn add(&mut self, other: &NodeStats) {
        self.offered += other.offered;
        self.delivered += other.delivered;
        self.lost += other.lost;
        self.collided += other.collided;
        self.violation_dropped += other.violation_dropped;
        self.superseded += other.superseded;
    }
}

/// A deliberate wrong-slot transmission: `node_id` sends its queue head in `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RogueTransmission {
    pub node_id: u16,
    pub at: SlotTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedFrame {
    pub arrival_ms: u64,
    pub frame: SensorFrame,
}

/// Per-node queues plus any injected misbehaviour.
///
/// Queues are FIFO by default. With `latest_wins`, a node that gets a transmit
/// opportunity sends only its newest arrived frame and discards older ones, as
/// a sensor reporting its current state would.
#[derive(Debug, Clone, Default)]
pub struct Traffic {
    pub queues: BTreeMap<u16, VecDeque<QueuedFrame>>,
    pub rogue: Vec<RogueTransmission>,
    pub latest_wins: bool,
}

impl Traffic {
    pub fn latest_wins() -> Self {
        Self { latest_wins: true, ..Self::default() }
    }

    pub fn enqueue(&mut self, node_id: u16, arrival_ms: u64, frame: SensorFrame) {
        self.queues.entry(node_id).or_default().push_back(QueuedFrame { arrival_ms, frame });
    }

    pub fn pending(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    /// Next frame `node_id` sends at `now_ms`, and how many it discarded.
    fn take_ready(&mut self, node_id: u16, now_ms: u64) -> (Option<Transmission>, u64) {
        let Some(queue) = self.queues.get_mut(&node_id) else { return (None, 0) };
        if queue.front().is_none_or(|q| q.arrival_ms > now_ms) {
            return (None, 0);
        }
        let dropped =
            if self.latest_wins { queue.iter().take_while(|q| q.arrival_ms <= now_ms).count() - 1 } else { 0 };
        queue.drain(..dropped);
        let q = queue.pop_front().expect("ready frame");
        (Some(Transmission { node_id, frame: q.frame, enqueued_ms: q.arrival_ms }), dropped as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub events: Vec<ChannelEvent>,
    pub stats: BTreeMap<u16, NodeStats>,
}

impl RunOutput {
    pub fn totals(&self) -> NodeStats {
        let mut t = NodeStats::default();
        for s in self.stats.values() {
            t.add(s);
        }
        t
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn violation_count(&self) -> usize {
        self.events.iter().map(|e| e.violations.len()).sum()
    }
}

/// The channel timeline. One owner advances it slot by slot.
#[derive(Debug, Clone)]
pub struct TdmaChannel {
    schedule: TdmaSchedule,
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    next_superframe: u64,
}

impl TdmaChannel {
    pub fn new(schedule: TdmaSchedule, cfg: ChannelConfig) -> Result<Self, TdmaError> {
        cfg.validate()?;
        Ok(Self { schedule, cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), next_superframe: 0 })
    }

    pub fn schedule(&self) -> &TdmaSchedule {
        &self.schedule
    }

    pub fn schedule_mut(&mut self) -> &mut TdmaSchedule {
        &mut self.schedule
    }

    pub fn next_superframe(&self) -> u64 {
        self.next_superframe
    }

    /// Resolves one slot given everything offered in it.
    pub fn transmit(&mut self, at: SlotTime, offered: Vec<Transmission>) -> Result<ChannelEvent, TdmaError> {
        let mut frames = Vec::new();
        let mut violations = Vec::new();
        for tx in offered {
            let slot = self.schedule.slot_of(tx.node_id).ok_or(TdmaError::UnregisteredNode(tx.node_id))?;
            if slot == at.slot {
                frames.push(tx);
            } else {
                violations.push(tx);
            }
        }
        let kind = match frames.len() {
            0 => EventKind::Idle,
            1 => {
                let draw: f64 = self.rng.random();
                if draw < self.cfg.loss_probability {
                    EventKind::Lost
                } else {
                    EventKind::Delivered
                }
            }
            _ => EventKind::Collision,
        };
        Ok(ChannelEvent { slot_time: at, start_ms: self.schedule.slot_start_ms(at), kind, frames, violations })
    }

    /// Advances `n_superframes` full superframes. Each node gets one transmit
    /// opportunity per superframe, at the start of its slot, for the head of its
    /// queue if that frame has already arrived.
    pub fn run_superframes(&mut self, traffic: &mut Traffic, n_superframes: u64) -> Result<RunOutput, TdmaError> {
        if n_superframes == 0 {
            return Err(TdmaError::InvalidConfig("n_superframes must be at least 1".into()));
        }
        for node in traffic.queues.keys() {
            if self.schedule.slot_of(*node).is_none() {
                return Err(TdmaError::UnregisteredNode(*node));
            }
        }
        let mut out = RunOutput::default();
        for node in self.schedule.assignments().keys() {
            out.stats.insert(*node, NodeStats::default());
        }

        let end = self.next_superframe + n_superframes;
        for superframe in self.next_superframe..end {
            for slot in 0..self.schedule.superframe_slots() {
                let at = SlotTime { superframe, slot };
                let now = self.schedule.slot_start_ms(at);
                let mut senders: Vec<u16> = self.schedule.nodes_in_slot(slot).collect();
                // A rogue entry naming the node's own slot is just its regular send.
                let rogue =
                    traffic.rogue.iter().filter(|r| r.at == at && self.schedule.slot_of(r.node_id) != Some(slot));
                senders.extend(rogue.map(|r| r.node_id));
                let mut offered = Vec::new();
                for n in senders {
                    let (tx, dropped) = traffic.take_ready(n, now);
                    out.stats.entry(n).or_default().superseded += dropped;
                    offered.extend(tx);
                }

                let event = self.transmit(at, offered)?;
                for tx in &event.frames {
                    let s = out.stats.entry(tx.node_id).or_default();
                    s.offered += 1;
                    match event.kind {
                        EventKind::Delivered => s.delivered += 1,
                        EventKind::Lost => s.lost += 1,
                        EventKind::Collision => s.collided += 1,
                        EventKind::Idle => unreachable!("idle slots carry no frames"),
                    }
                }
                for tx in &event.violations {
                    let s = out.stats.entry(tx.node_id).or_default();
                    s.offered += 1;
                    s.violation_dropped += 1;
                }
                out.events.push(event);
            }
        }
        self.next_superframe = end;
        Ok(out)
    }
}

/// Writes the event log as `superframe,slot,node,kind,seq`, one row per frame
/// (violations as kind `violation`) and one row per idle slot.
pub fn write_event_csv<W: Write>(mut w: W, events: &[ChannelEvent]) -> io::Result<()> {
    writeln!(w, "superframe,slot,node,kind,seq")?;
    for e in events {
        let SlotTime { superframe, slot } = e.slot_time;
        if e.frames.is_empty() && e.violations.is_empty() {
            writeln!(w, "{superframe},{slot},,idle,")?;
        }
        for tx in &e.frames {
            writeln!(w, "{superframe},{slot},{},{},{}", tx.node_id, e.kind.as_str(), tx.frame.seq)?;
        }
        for tx in &e.violations {
            writeln!(w, "{superframe},{slot},{},violation,{}", tx.node_id, tx.frame.seq)?;
        }
    }
    Ok(())
}
