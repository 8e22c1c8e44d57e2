use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn zrplab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrplab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run_dir(out: &Output) -> PathBuf {
    let line: Value = serde_json::from_slice(&out.stdout).expect("status line");
    PathBuf::from(line["run"].as_str().unwrap())
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

const SMALL: &str = r#"
[rate]
family = "power"
alpha = 0.5

[[defects]]
x = 0.5
beta = 0.5
lambda = 2.0

[initial]
profile = { kind = "cosine", mean = 2.0, amplitude = 1.0 }

[simulation]
n = 64
times = [0.005, 0.01]
"#;

#[test]
fn same_seed_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let files = |out: &str, workers: &str| {
        let o = zrplab(&["simulate", s.to_str().unwrap(), "--seed", "7", "--event-log", "--workers", workers], &tmp.path().join(out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        manifest(&run_dir(&o))["files"].clone()
    };
    let a = files("a", "1");
    let b = files("b", "3");
    assert_eq!(a, b);
    assert_eq!(a.as_array().unwrap().len(), 3);

    let o = zrplab(&["simulate", s.to_str().unwrap(), "--seed", "8"], &tmp.path().join("c"));
    let c = manifest(&run_dir(&o))["files"].clone();
    assert_ne!(a[1]["sha256"], c.as_array().unwrap().iter().find(|f| f["path"] == "snapshots.csv").unwrap()["sha256"]);
}

#[test]
fn simulate_writes_snapshot_table() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let o = zrplab(&["simulate", s.to_str().unwrap()], tmp.path());
    let dir = run_dir(&o);
    let name = dir.file_name().unwrap().to_str().unwrap().to_owned();
    assert!(name.starts_with("simulate-") && name.ends_with("-s1"), "{name}");
    let csv = fs::read_to_string(dir.join("snapshots.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("time,site,occupancy"));
    assert_eq!(csv.lines().count(), 1 + 2 * 64);
    let m = manifest(&dir);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 1);
    assert!(m["pass"].is_null());
}

#[test]
fn missing_family_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), "[rate]\nalpha = 1.0\n[initial]\nprofile = { kind = \"constant\", value = 1.0 }\n");
    let o = zrplab(&["simulate", s.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = error_line(&o);
    assert_eq!(e["kind"], "config");
    assert!(e["message"].as_str().unwrap().contains("`family`"));
}

#[test]
fn colliding_defects_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[rate]
family = "identity"
[[defects]]
x = 0.5
beta = 1.0
lambda = 2.0
[[defects]]
x = 0.52
beta = 0.5
lambda = 2.0
[initial]
profile = { kind = "constant", value = 1.0 }
[simulation]
n = 8
times = [0.01]
"#;
    let o = zrplab(&["simulate", scenario(tmp.path(), text).to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = error_line(&o);
    assert_eq!(e["kind"], "defect-collision");
    assert!(e["message"].as_str().unwrap().contains("defects 0 and 1"));
}

fn solver_scenario(solver: &str) -> String {
    format!("[rate]\nfamily = \"identity\"\n[initial]\nprofile = {{ kind = \"constant\", value = 1.0 }}\n[solver]\n{solver}\n")
}

#[test]
fn cfl_above_half_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &solver_scenario("m = 64\ncfl = 0.6\nt_end = 0.01"));
    let o = zrplab(&["solve", s.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["kind"], "cfl");
}

#[test]
fn snapshot_past_end_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &solver_scenario("m = 64\nt_end = 0.01\nsnapshots = [0.005, 0.02]"));
    let o = zrplab(&["solve", s.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("solver.snapshots"));
}

fn read_table(path: &Path) -> Vec<(f64, f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn heat_solution_matches_reference_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zrplab(&["solve", bundled("heat.toml").to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let dir = run_dir(&o);
    let ours = read_table(&dir.join("density.csv"));
    let reference = read_table(&bundled("heat_reference.csv"));
    assert_eq!(ours.len(), reference.len());
    let m = 512.0;
    for (a, b) in ours.iter().zip(&reference) {
        assert_eq!((a.0, a.1), (b.0, b.1));
        assert!((a.2 - b.2).abs() < 5.0 / (m * m), "{a:?} {b:?}");
    }
    let atoms: Value = serde_json::from_str(&fs::read_to_string(dir.join("atoms.json")).unwrap()).unwrap();
    assert!(atoms["mass_audit"]["drift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn json_format_and_bouncing_log() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zrplab(&["solve", bundled("bouncing.toml").to_str().unwrap(), "--format", "json"], tmp.path());
    assert!(o.status.success());
    let dir = run_dir(&o);
    let density: Value = serde_json::from_str(&fs::read_to_string(dir.join("density.json")).unwrap()).unwrap();
    assert_eq!(density["m"], 512);
    let atoms: Value = serde_json::from_str(&fs::read_to_string(dir.join("atoms.json")).unwrap()).unwrap();
    let regimes: Vec<&str> = atoms["regime_log"].as_array().unwrap().iter().map(|r| r["regime"].as_str().unwrap()).collect();
    assert_eq!(regimes, ["transparent", "pinned", "transparent"]);
}

const TINY_COMPARE: &str = r#"
[rate]
family = "identity"
[initial]
profile = { kind = "cosine", mean = 1.0, amplitude = 1.0 }
[harness]
n_ladder = [32, 64]
replicas = 2
theta = 0.125
times = [0.01]
reference = "fourier"
"#;

#[test]
fn zero_thresholds_fail_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &format!("{TINY_COMPARE}[harness.thresholds]\nmax_l1 = 0.0\n"));
    let o = zrplab(&["compare", s.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let dir = run_dir(&o);
    assert!(dir.join("report.json").exists());
    assert!(dir.join("l1.csv").exists());
    assert_eq!(manifest(&dir)["pass"], false);
}

#[test]
fn loose_thresholds_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &format!("{TINY_COMPARE}[harness.thresholds]\nmax_l1 = 10.0\n"));
    let o = zrplab(&["compare", s.to_str().unwrap(), "--format", "json"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let dir = run_dir(&o);
    assert!(!dir.join("l1.csv").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["l1"].as_array().unwrap().len(), 2);
}

#[test]
fn empty_ladder_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &TINY_COMPARE.replace("[32, 64]", "[]"));
    let o = zrplab(&["compare", s.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("n_ladder"));
}

#[test]
fn static_writes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zrplab(&["static", bundled("static.toml").to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let dir = run_dir(&o);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("static.json")).unwrap()).unwrap();
    let scaled = report["defects"][0]["scaled"].as_f64().unwrap();
    assert!((scaled - 2.0).abs() < 0.1);
    let lines = fs::read_to_string(dir.join("samples.csv")).unwrap().lines().count();
    assert_eq!(lines, 1 + 2 * 1000);
}

#[test]
fn quick_toolkit_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zrplab(&["verify", "toolkit", "--quick"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&o);
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(r[0]["suite"], "toolkit");
    assert_eq!(r[0]["pass"], true);
}

#[test]
fn unknown_suite_and_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(zrplab(&["verify", "everything"], tmp.path()).status.code(), Some(2));
    let o = zrplab(&["plot"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["kind"], "usage");
}

#[test]
fn bundled_critical_compare_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zrplab(&["compare", bundled("critical.toml").to_str().unwrap(), "--seed", "2024"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(run_dir(&o).join("report.json")).unwrap()).unwrap();
    let l1: Vec<f64> = report["l1"].as_array().unwrap().iter().map(|r| r["l1"].as_f64().unwrap()).collect();
    assert_eq!(l1.len(), 3);
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
}
