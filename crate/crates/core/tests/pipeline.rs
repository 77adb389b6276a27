use std::fs;
use std::path::PathBuf;

use uhs_core::api::AlertCause;
use uhs_core::scenario::{run_scenario, Endpoint, ScenarioError, ScenarioScript};

fn scenario(name: &str) -> ScenarioScript {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioScript::load(&path).unwrap()
}

#[test]
fn shipped_scenarios_run_and_account_for_every_upload() {
    for name in ["fall.toml", "constant.toml", "ward.toml"] {
        let script = scenario(name);
        let report = run_scenario(&script, &Endpoint::Embedded, None).unwrap();
        assert_eq!(report.patients.len(), script.patients.len(), "{name}");
        for p in &report.patients {
            assert_eq!(p.node.uploads as usize, p.server_stored, "{name} {}", p.patient_id);
            assert_eq!(p.node.observations, p.node.uploads + p.node.suppressed, "{name}");
            assert!((0.0..=1.0).contains(&p.suppression_ratio), "{name}");
            assert!(p.channel.is_conserved(), "{name}");
            assert_eq!(p.node.failures, 0, "{name}");
        }
        for f in &report.falls {
            assert!(f.alert_id.is_some(), "{name}: fall at {} s unreported", f.onset_s);
            assert_eq!(f.within_bound, Some(true), "{name}");
            assert!(f.location_attached, "{name}");
        }
    }
}

#[test]
fn constant_state_uploads_once_per_distinct_state() {
    let report = run_scenario(&scenario("constant.toml"), &Endpoint::Embedded, None).unwrap();
    let p = &report.patients[0];
    assert_eq!(p.node.uploads, 2, "first activity report, then first fused vitals");
    assert!(p.suppression_ratio > 0.95);
    assert!(report.alerts.is_empty());
}

#[test]
fn ward_raises_the_expected_alerts() {
    let report = run_scenario(&scenario("ward.toml"), &Endpoint::Embedded, None).unwrap();
    let causes = |pid: &str| -> Vec<AlertCause> {
        report.alerts.iter().filter(|a| a.patient_id == pid).map(|a| a.cause).collect()
    };
    assert!(causes("ward-1").is_empty());
    assert!(causes("ward-2").contains(&AlertCause::RuleSpo2Low));
    assert!(causes("ward-3").contains(&AlertCause::RuleFall));
    assert!(report.channel.lost > 0, "5% loss over two minutes drops some frames");
}

#[test]
fn seed_controls_the_run() {
    let script = scenario("ward.toml");
    let a = run_scenario(&script, &Endpoint::Embedded, None).unwrap().to_json();
    let b = run_scenario(&script, &Endpoint::Embedded, None).unwrap().to_json();
    assert_eq!(a, b);
    let reseeded = ScenarioScript { seed: script.seed + 1, ..script };
    let c = run_scenario(&reseeded, &Endpoint::Embedded, None).unwrap().to_json();
    assert_ne!(a, c);
}

#[test]
fn trace_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&scenario("fall.toml"), &Endpoint::Embedded, Some(dir.path())).unwrap();
    for suffix in ["accel.csv", "ppg.csv", "tdma.csv", "uploads.jsonl"] {
        let text = fs::read_to_string(dir.path().join(format!("p-001_{suffix}"))).unwrap();
        assert!(text.lines().count() > 1, "{suffix} is empty");
    }
    let uploads = fs::read_to_string(dir.path().join("p-001_uploads.jsonl")).unwrap();
    let uploaded = uploads.lines().filter(|l| l.contains("\"uploaded\"")).count();
    assert_eq!(uploaded as u64, report.patients[0].node.uploads);
    assert_eq!(fs::read_to_string(dir.path().join("report.json")).unwrap(), report.to_json());
}

#[test]
fn parse_errors_carry_line_and_column() {
    let text =
        "duration_s = 10\nseed = 1\n\n[[patients]]\npatient_id = \"a\"\ntimeline = [ { start_s = 0, activity = } ]\n";
    match ScenarioScript::from_toml(text) {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected parse error, got {other:?}"),
    }
    let unknown = "duration_s = 10\nseed = 1\nspeed = 3\n";
    match ScenarioScript::from_toml(unknown) {
        Err(e @ ScenarioError::Parse { line: 3, .. }) => assert!(e.to_string().contains("speed")),
        other => panic!("expected unknown-field error on line 3, got {other:?}"),
    }
}

#[test]
fn semantic_errors_are_config_errors() {
    let base = |timeline: &str| {
        format!("duration_s = 20\nseed = 1\n[[patients]]\npatient_id = \"a\"\ntimeline = [{timeline}]\n")
    };
    let cases = [
        base("{ start_s = 5, activity = 1, spo2 = 97, hr = 60 }"),
        base("{ start_s = 0, activity = 1, spo2 = 97, hr = 60 }, { start_s = 0, activity = 2, spo2 = 97, hr = 60 }"),
        base("{ start_s = 0, activity = 7, spo2 = 97, hr = 60 }"),
        base("{ start_s = 0, activity = 1, spo2 = 99, hr = 60 }"),
        base("{ start_s = 0, activity = 1, spo2 = 97, hr = 300 }"),
        "duration_s = 20\nseed = 1\npatients = []\n".to_owned(),
        base("{ start_s = 0, activity = 1, spo2 = 97, hr = 60 }")
            .replace("seed = 1", "seed = 1\n[channel]\nloss_probability = 1.5"),
    ];
    for text in cases {
        let err = ScenarioScript::from_toml(&text).unwrap_err();
        assert!(err.is_config(), "{text}: {err}");
    }
}
