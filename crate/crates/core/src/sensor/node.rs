//! Stateful sensor instances. Each one owns its sample buffer and frame
//! sequence counter and is driven by a single caller.

use std::collections::VecDeque;

use super::activity::{classify_activity, ClassifierConfig, ClassifierError};
use super::frame::SensorFrame;
use super::vitals::{extract_vitals, VitalsError};
use crate::synth::{AccelSample, PpgSample};

fn to_ms(t: f64) -> u32 {
    (t * 1000.0).round() as u32
}

/// Accelerometer node: classifies back-to-back windows and reports each one,
/// and reports immediately when a sample crosses the impact threshold.
#[derive(Debug, Clone)]
pub struct AccelSensor {
    node_id: u16,
    seq: u16,
    cfg: ClassifierConfig,
    buffer: VecDeque<AccelSample>,
    since_report: usize,
    since_impact_report: Option<usize>,
}

impl AccelSensor {
    pub fn new(node_id: u16, cfg: ClassifierConfig) -> Result<Self, ClassifierError> {
        cfg.validate()?;
        Ok(Self {
            node_id,
            seq: 0,
            cfg,
            buffer: VecDeque::with_capacity(cfg.window_len),
            since_report: 0,
            since_impact_report: None,
        })
    }

    pub fn node_id(&self) -> u16 {
        self.node_id
    }

    fn emit(&mut self, t: f64, out: &mut Vec<SensorFrame>) {
        let window: Vec<AccelSample> = self.buffer.iter().copied().collect();
        let id = classify_activity(&window, &self.cfg).expect("buffer holds exactly one window");
        out.push(SensorFrame::activity(self.node_id, self.seq, to_ms(t), id));
        self.seq = self.seq.wrapping_add(1);
    }

    /// Feeds one sample; frames produced by it are appended to `out`.
    pub fn push(&mut self, sample: AccelSample, out: &mut Vec<SensorFrame>) {
        if self.buffer.len() == self.cfg.window_len {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.since_report += 1;
        if let Some(n) = self.since_impact_report.as_mut() {
            *n += 1;
        }
        let full = self.buffer.len() == self.cfg.window_len;

        if self.since_report == self.cfg.window_len {
            self.since_report = 0;
            self.emit(sample.t, out);
            return;
        }
        let impact = sample.z.abs() >= self.cfg.fall_z_peak_min;
        let cooled = self.since_impact_report.is_none_or(|n| n >= self.cfg.window_len);
        if impact && full && cooled {
            self.since_impact_report = Some(0);
            self.emit(sample.t, out);
        }
    }
}

/// Pulse-oximeter node: reports a vitals reading over a trailing window at a
/// fixed cadence once the window has filled.
#[derive(Debug, Clone)]
pub struct PpgSensor {
    node_id: u16,
    seq: u16,
    window_len: usize,
    report_every: usize,
    buffer: VecDeque<PpgSample>,
    since_report: usize,
}

impl PpgSensor {
    /// `window_len` and `report_every` are in samples.
    pub fn new(node_id: u16, window_len: usize, report_every: usize) -> Self {
        Self {
            node_id,
            seq: 0,
            window_len: window_len.max(2),
            report_every: report_every.max(1),
            buffer: VecDeque::with_capacity(window_len),
            since_report: 0,
        }
    }

    pub fn node_id(&self) -> u16 {
        self.node_id
    }

    pub fn push(&mut self, sample: PpgSample, out: &mut Vec<SensorFrame>) -> Result<(), VitalsError> {
        if self.buffer.len() == self.window_len {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.since_report += 1;
        if self.buffer.len() == self.window_len && self.since_report >= self.report_every {
            self.since_report = 0;
            let window: Vec<PpgSample> = self.buffer.iter().copied().collect();
            let reading = extract_vitals(&window, to_ms(sample.t))?;
            out.push(SensorFrame::vitals(self.node_id, self.seq, &reading));
            self.seq = self.seq.wrapping_add(1);
        }
        Ok(())
    }
}
