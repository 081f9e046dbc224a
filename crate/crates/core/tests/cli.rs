//! End-to-end checks of the `sim` binary.

use std::path::Path;
use std::process::{Command, Output};

use platoon::analysis::RobustModel;
use platoon::sim::scenario::InitialCondition;
use platoon::sim::{presets, read_trace_csv, Scenario};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_scenario(dir: &Path) -> std::path::PathBuf {
    let mut s = presets::delay_steps_platoon();
    s.duration = 1.0;
    let file = dir.join("short.json");
    s.save(&file).unwrap();
    file
}

#[test]
fn run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let out = dir.path().join("trace.csv");
    let res = sim(&["run", "--scenario", path(&scenario), "--out", path(&out)]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let trace = read_trace_csv(&out).unwrap();
    assert_eq!(trace.n_vehicles, 4);
    assert_eq!(trace.rows.len(), 1001);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = short_scenario(dir.path());
    assert_eq!(
        sim(&["validate", "--scenario", path(&good)]).status.code(),
        Some(0)
    );

    let mut s = Scenario::load(&good).unwrap();
    s.dt = -1.0;
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, s.to_json().unwrap()).unwrap();
    assert_eq!(
        sim(&["validate", "--scenario", path(&bad)]).status.code(),
        Some(2)
    );
    let out = dir.path().join("t.csv");
    assert_eq!(
        sim(&["run", "--scenario", path(&bad), "--out", path(&out)])
            .status
            .code(),
        Some(2)
    );

    let missing = dir.path().join("missing.json");
    assert_eq!(
        sim(&["validate", "--scenario", path(&missing)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = presets::single_follower_step();
    s.vehicles[1].params.gain_kp = 1e4;
    s.vehicles[1].params.gain_kv = 1e3;
    s.dt = 0.05;
    s.duration = 200.0;
    s.initial = InitialCondition::ColdStart { gaps: vec![5.0] };
    let file = dir.path().join("unstable.json");
    std::fs::write(&file, s.to_json().unwrap()).unwrap();
    let out = dir.path().join("t.csv");
    let res = sim(&["run", "--scenario", path(&file), "--out", path(&out)]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn analyze_reports() {
    let res = sim(&["analyze", "delay-measure", "--variant", "pure-velocity"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("1.200000"));

    let res = sim(&[
        "analyze",
        "positivity",
        "--overall-delay",
        "1.8",
        "--tau",
        "0.6",
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("externally positive: true"));

    let res = sim(&["analyze", "tune-kp", "--tau-max", "0"]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("model.json");
    let res = sim(&[
        "export-robust",
        "--out",
        path(&out),
        "--delta-min",
        "1.4",
        "--delta-max",
        "1.6",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let m = RobustModel::load(&out).unwrap();
    assert!((m.delta_bar - 1.5).abs() < 1e-12);
    assert!(m.nominal_spectral_abscissa() < 0.0);
}

#[test]
fn shipped_scenarios_match_presets() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios");
    let steps = Scenario::load(docs.join("delay_steps.json")).unwrap();
    assert_eq!(steps, presets::delay_steps_platoon());
    let single = Scenario::load(docs.join("single_follower.json")).unwrap();
    assert_eq!(single, presets::single_follower_step());
}
