//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! time limit, prints one PASS/FAIL line per criterion and exits non-zero if any
//! fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{authz, restore, Fixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhs_core::api::{AlertCause, Observation, ObservedState, Vitals};
use uhs_core::base_node::{BaseNode, BaseNodeConfig};
use uhs_core::scenario::{run_scenario, Endpoint, ScenarioScript};
use uhs_core::sensor::activity::{classify_activity, ClassifierConfig};
use uhs_core::sensor::vitals::extract_vitals;
use uhs_core::sensor::{HR_MAX_BPM, HR_MIN_BPM, SPO2_MAX};
use uhs_core::server::risk::{
    accuracy, features, gradient, loss, train_model, LabeledSample, RiskModel, TrainConfig, N_FEATURES,
};
use uhs_core::synth::{synth_accel, synth_ppg, SynthConfig};
use uhs_core::tdma::{ChannelConfig, EventKind, RogueTransmission, SlotTime, TdmaChannel, TdmaSchedule, Traffic};
use uhs_core::{ActivityId, Quality, SensorFrame};

type Check = Result<String, String>;

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Check, Option<u64>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn activity_classification() -> Check {
    let cfg = ClassifierConfig::default();
    let mut summary = Vec::new();
    for state in [ActivityId::Resting, ActivityId::Walking, ActivityId::Running] {
        let mut correct = 0;
        for seed in 0..1000 {
            let w = synth_accel(&SynthConfig::accel(state, 1.0, seed, 0.05)).map_err(|e| e.to_string())?;
            if classify_activity(&w, &cfg) == Ok(state) {
                correct += 1;
            }
        }
        let acc = f64::from(correct) / 1000.0;
        ensure(acc >= 0.95, || format!("{} accuracy {acc:.3} < 0.95", state.name()))?;
        summary.push(format!("{} {acc:.3}", state.name()));
    }
    let mut detected = 0;
    for seed in 0..1000 {
        let w = synth_accel(&SynthConfig::accel(ActivityId::Falling, 1.0, seed, 0.05)).map_err(|e| e.to_string())?;
        if classify_activity(&w, &cfg) == Ok(ActivityId::Falling) {
            detected += 1;
        }
    }
    ensure(detected == 1000, || format!("{detected}/1000 fall windows detected"))?;
    summary.push("falls 1000/1000".into());
    Ok(summary.join(", "))
}

fn vitals_extraction() -> Check {
    let mut worst = (0.0f64, 0.0f64);
    for spo2 in [60.0, 85.0, 97.0] {
        for hr in [30.0, 60.0, 120.0, 245.0] {
            let w = synth_ppg(&SynthConfig::ppg(spo2, hr, 8.0, 0, 0.0)).map_err(|e| e.to_string())?;
            let v = extract_vitals(&w, 8000).map_err(|e| format!("spo2 {spo2} hr {hr}: {e}"))?;
            let (de, dh) = ((f64::from(v.spo2) - spo2).abs(), (f64::from(v.hr) - hr).abs());
            ensure(de <= 1.0 && dh <= 2.0, || format!("target ({spo2}, {hr}) got ({}, {})", v.spo2, v.hr))?;
            ensure(v.spo2 <= SPO2_MAX && (HR_MIN_BPM..=HR_MAX_BPM).contains(&v.hr), || format!("{v:?} out of range"))?;
            worst = (worst.0.max(de), worst.1.max(dh));
        }
    }
    Ok(format!("12 grid points, max |dSpO2| {} max |dHR| {}", worst.0, worst.1))
}

fn tdma() -> Check {
    const SUPERFRAMES: u64 = 10_000;
    let schedule = {
        let mut s = TdmaSchedule::default();
        for node in 1..=8 {
            s.register_node(node).map_err(|e| e.to_string())?;
        }
        s
    };
    let sf_ms = schedule.superframe_ms();
    let frame = |node: u16, k: u64| SensorFrame::activity(node, k as u16, 0, ActivityId::Resting);

    // Compliant traffic: one frame per node per superframe, arriving at a random
    // time after the previous transmit opportunity.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut traffic = Traffic::default();
    for node in 1..=8u16 {
        let slot_start =
            u64::from(schedule.slot_of(node).expect("registered")) * u64::from(schedule.slot_duration_ms());
        for k in 0..SUPERFRAMES {
            let lo = (k * sf_ms + slot_start).saturating_sub(sf_ms - 1);
            traffic.enqueue(node, rng.random_range(lo..=k * sf_ms + slot_start), frame(node, k));
        }
    }
    let mut ch = TdmaChannel::new(schedule.clone(), ChannelConfig::default()).map_err(|e| e.to_string())?;
    let out = ch.run_superframes(&mut traffic, SUPERFRAMES).map_err(|e| e.to_string())?;
    let totals = out.totals();
    ensure(out.count(EventKind::Collision) == 0, || format!("{} collisions", out.count(EventKind::Collision)))?;
    ensure(totals.delivered == 8 * SUPERFRAMES, || format!("{} delivered", totals.delivered))?;
    let max_delay =
        out.events.iter().flat_map(|e| e.frames.iter().map(move |f| e.start_ms - f.enqueued_ms)).max().unwrap_or(0);
    ensure(max_delay <= sf_ms, || format!("delay {max_delay} ms > {sf_ms} ms"))?;

    // Backlogged nodes plus injected wrong-slot sends.
    let mut traffic = Traffic::default();
    for node in 1..=8u16 {
        for k in 0..2 * SUPERFRAMES {
            traffic.enqueue(node, 0, frame(node, k));
        }
    }
    let mut injected = BTreeSet::new();
    while injected.len() < 500 {
        let node = rng.random_range(1..=8u16);
        let at = SlotTime { superframe: rng.random_range(0..SUPERFRAMES), slot: rng.random_range(0..9) };
        if schedule.slot_of(node) != Some(at.slot) && !injected.iter().any(|&(_, a)| a == at) {
            injected.insert((node, at));
        }
    }
    traffic.rogue = injected.iter().map(|&(node_id, at)| RogueTransmission { node_id, at }).collect();
    let mut ch = TdmaChannel::new(schedule, ChannelConfig::default()).map_err(|e| e.to_string())?;
    let out = ch.run_superframes(&mut traffic, SUPERFRAMES).map_err(|e| e.to_string())?;
    let seen: BTreeSet<(u16, SlotTime)> =
        out.events.iter().flat_map(|e| e.violations.iter().map(move |v| (v.node_id, e.slot_time))).collect();
    ensure(out.violation_count() == injected.len() && seen == injected, || {
        format!("{} violations for {} injected", out.violation_count(), injected.len())
    })?;
    ensure(out.count(EventKind::Collision) == 0, || "collisions with rogue senders".into())?;
    ensure(out.stats.values().all(|s| s.is_conserved()), || "frame accounting not conserved".into())?;
    Ok(format!("0 collisions, max delay {max_delay}/{sf_ms} ms, {} violations as injected", injected.len()))
}

fn random_state(rng: &mut ChaCha8Rng) -> ObservedState {
    let activity = ActivityId::ALL[rng.random_range(0..4)];
    let vitals = rng.random_bool(0.8).then(|| {
        let quality = if rng.random_bool(0.9) { Quality::Ok } else { Quality::LowConfidence };
        (rng.random_range(88..=97), rng.random_range(55..=75), quality)
    });
    ObservedState { activity, vitals }
}

fn delta_suppression() -> Check {
    let f = Fixture::new();
    let dr = f.doctor_token();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut uploads, mut steps) = (0, 0);
    for i in 0..1000 {
        let id = format!("s{i}");
        let tok = f.add_patient(&dr, &id);
        let mut truth = Vec::new();
        while truth.len() < 40 {
            let s = random_state(&mut rng);
            truth.extend(std::iter::repeat_n(s, rng.random_range(1..=6)));
        }
        let mut node = BaseNode::new(BaseNodeConfig::new(&id), f.server.clone(), tok).map_err(|e| e.to_string())?;
        for (k, s) in truth.iter().enumerate() {
            let obs = Observation {
                patient_id: id.clone(),
                seq_upload: 0,
                t: k as f64,
                activity: s.activity,
                vitals: s.vitals.map(|(spo2, hr, quality)| Vitals { spo2, hr, ratio_r: 0.5, quality }),
                location: None,
            };
            node.offer(obs).map_err(|e| e.to_string())?;
        }
        let changes = truth.windows(2).filter(|w| w[0] != w[1]).count();
        let stored = f.client().collect_data(&dr, &id, None, None).map_err(|e| e.to_string())?;
        ensure(stored.len() == 1 + changes && node.counters().uploads as usize == stored.len(), || {
            format!("sequence {i}: {} uploads for {changes} changes", stored.len())
        })?;
        for (k, expected) in truth.iter().enumerate() {
            let replayed = stored.iter().rev().find(|o| o.t <= k as f64).map(Observation::state);
            ensure(replayed.as_ref() == Some(expected), || format!("sequence {i} step {k}: replay {replayed:?}"))?;
        }
        uploads += stored.len();
        steps += truth.len();
    }
    Ok(format!("1000 sequences, {uploads} uploads for {steps} observations, replay exact"))
}

fn risk_model() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = separable_set(&mut rng);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut w = [0.0; N_FEATURES];
        w.iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
        let b = rng.random_range(-1.0..1.0);
        let l2 = rng.random_range(0.0..0.1);
        let (gw, gb) = gradient(&w, b, &data, l2);
        let h = 1e-5;
        for j in 0..=N_FEATURES {
            let shifted = |d: f64| {
                let (mut w2, mut b2) = (w, b);
                if j < N_FEATURES {
                    w2[j] += d;
                } else {
                    b2 += d;
                }
                loss(&w2, b2, &data, l2)
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let analytic = if j < N_FEATURES { gw[j] } else { gb };
            worst = worst.max((numeric - analytic).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("gradient mismatch {worst:e}"))?;

    let hyper = TrainConfig { lr: 0.1, epochs: 500, l2: 0.0 };
    let outcome = train_model(&data, &hyper).map_err(|e| e.to_string())?;
    let acc = accuracy(&outcome.model, &data);
    ensure(acc >= 0.95, || format!("training accuracy {acc:.3} after 500 epochs"))?;
    let model = RiskModel { threshold: 0.5, ..outcome.model };
    Ok(format!("max gradient error {worst:.1e}, accuracy {:.3} after 500 epochs", accuracy(&model, &data)))
}

/// 200 observations labelled by a saturation cut at 90 with a gap around it.
fn separable_set(rng: &mut ChaCha8Rng) -> Vec<LabeledSample> {
    (0..200)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let spo2 = if label == 1 { rng.random_range(75..=87) } else { rng.random_range(92..=97) };
            let obs = Observation {
                patient_id: String::new(),
                seq_upload: i,
                t: 0.0,
                activity: ActivityId::ALL[rng.random_range(0..3)],
                vitals: Some(Vitals { spo2, hr: rng.random_range(55..=110), ratio_r: 0.0, quality: Quality::Ok }),
                location: None,
            };
            LabeledSample { features: features(&obs), label }
        })
        .collect()
}

const FALL_SCENARIO: &str = r#"
duration_s = 40
seed = 2024
upload_rtt_ms = 100

[channel]
loss_probability = 0.0

[[patients]]
patient_id = "fall-1"
location = { lat = 48.8566, lon = 2.3522 }
timeline = [
  { start_s = 0,  activity = 2, spo2 = 97, hr = 90 },
  { start_s = 30, activity = 4, spo2 = 96, hr = 110 },
]
"#;

fn end_to_end_fall() -> Check {
    let script = ScenarioScript::from_toml(FALL_SCENARIO).map_err(|e| e.to_string())?;
    let bound = script.latency_bound_s();
    let report = run_scenario(&script, &Endpoint::Embedded, None).map_err(|e| e.to_string())?;
    let fall = report.falls.first().ok_or("no scripted fall in report")?;
    ensure(fall.onset_s == 30.0, || format!("fall onset {}", fall.onset_s))?;
    let alert_id = fall.alert_id.ok_or("fall raised no alert")?;
    let alert = report.alerts.iter().find(|a| a.alert_id == alert_id).ok_or("alert missing from report")?;
    ensure(alert.cause == AlertCause::RuleFall, || format!("alert cause {:?}", alert.cause))?;
    ensure(alert.location.is_some() && fall.location_attached, || "alert carries no location".into())?;
    let latency = fall.latency_s.ok_or("no latency")?;
    ensure(latency <= bound, || format!("latency {latency:.3} s > bound {bound:.3} s"))?;
    let first = report.to_json();
    for _ in 0..2 {
        let again = run_scenario(&script, &Endpoint::Embedded, None).map_err(|e| e.to_string())?.to_json();
        ensure(again == first, || "report bytes differ between seeded runs".into())?;
    }
    Ok(format!("rule_fall alert with location, latency {latency:.3} s <= {bound:.3} s, 3 identical reports"))
}

fn persistence_and_auth() -> Check {
    let cells = authz::check_matrix()?;
    for snapshot_every in [0, 1, 4, 1000] {
        restore::check_restore(snapshot_every)?;
    }
    Ok(format!("{cells} endpoint/caller cells, restore identical for snapshot_every 0/1/4/1000"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("activity classification", activity_classification, Some(10)),
        ("vitals extraction", vitals_extraction, Some(5)),
        ("tdma channel", tdma, Some(10)),
        ("delta suppression", delta_suppression, Some(10)),
        ("risk model", risk_model, Some(5)),
        ("end-to-end fall", end_to_end_fall, Some(30)),
        ("persistence and authorization", persistence_and_auth, None),
    ];
    let mut failed = 0;
    for (name, check, limit_s) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit_s) {
            (Ok(_), Some(limit)) if elapsed > Duration::from_secs(limit) => {
                Err(format!("took {:.2} s, limit {limit} s", elapsed.as_secs_f64()))
            }
            (r, _) => r,
        };
        let limit = limit_s.map_or(String::new(), |l| format!(" (limit {l} s)"));
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2} s{limit}]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.2} s{limit}]", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
