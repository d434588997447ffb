use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_fluxsym"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("FLUXSYM_THREADS", "1")
        .output()
        .expect("binary runs");
    (o.status.code().expect("exit code"), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_catalog_system_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["verify", "--system", "t3_twist", "--grid", "9"], dir.path());
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path());
    assert_eq!(r["schema"], "fluxsym/1");
    assert_eq!(r["operation"], "verify");
    assert_eq!(r["verdict"], "PASS");
    assert_eq!(r["config"]["system"], "t3_twist");
}

#[test]
fn symmetry_with_builtin_eta_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["symmetry", "--system", "t3_twist", "--eta", "builtin", "--grid", "9"], dir.path());
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path());
    assert_eq!(r["verdict"], "PASS");
}

#[test]
fn inline_system_with_bad_nu_fails_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let tau = std::f64::consts::TAU;
    let sys = format!(
        r#"{{"chart": {{"names": ["x", "y", "z"], "axes": [{{"kind": "periodic", "period": {tau}}},
            {{"kind": "periodic", "period": {tau}}}, {{"kind": "periodic", "period": {tau}}}]}},
            "B": ["sin(z)", "cos(z)", "0"], "nu": ["1", "0", "0"]}}"#
    );
    let (code, _) = run(&["verify", "--system", &sys, "--grid", "9"], dir.path());
    assert_eq!(code, 2);
    let r = report(dir.path());
    assert_eq!(r["verdict"], "FAIL");
    assert_eq!(r["payload"]["violation"]["axiom"], "nu_of_B");
}

#[test]
fn not_adapted_eta_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&["symmetry", "--system", "duffing_t", "--eta", "dx", "--grid", "9"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["symmetry", "--system", "duffing_t", "--eta", "dt", "--grid", "9"];
    assert_eq!(run(&args, a.path()).0, 0);
    assert_eq!(run(&args, b.path()).0, 0);
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn unknown_config_key_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"schema": "fluxsym/1", "system": "t3_twist", "gird": 9}"#).unwrap();
    let (code, err) = run(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 3);
    assert!(err.contains("gird"), "{err}");
}

#[test]
fn unknown_catalog_id_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&["verify", "--system", "abc_flow"], dir.path());
    assert_eq!(code, 3);
    assert_eq!(report(dir.path())["error"]["kind"], "config");
}

#[test]
fn trace_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["trace", "--system", "duffing_t", "--seed", "0.5,0,0", "--time", "1"], dir.path());
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    assert_eq!(report(dir.path())["files"][0], "trajectory_0.csv");
}

#[test]
fn catalog_check_reproduces_expected_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["catalog", "--system", "modded_symmetry", "--check"], dir.path());
    assert_eq!(code, 0, "{err}");
    let checks = report(dir.path())["payload"]["checks"].as_array().unwrap().clone();
    assert!(checks.iter().all(|c| c["verdict"] == "PASS"));
}

#[test]
fn obstruct_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"schema": "fluxsym/1", "system": "reeb_solid_torus", "eta": "dphi", "orbit_seeds": [[0, 1, 0], [0, -1, 0]]}"#,
    )
    .unwrap();
    let (code, err) = run(&["obstruct", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(report(dir.path())["payload"]["obstruction"]["verdict"], "OBSTRUCTED");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fluxsym"))
        .args(["catalog", "--out"])
        .arg(dir.path())
        .env("FLUXSYM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}
