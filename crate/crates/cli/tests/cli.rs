use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multispeed_core::io::save_pair;
use multispeed_core::{ComplexField, FieldPair, Grid, C64};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multispeed")).args(args).output().unwrap()
}

fn run_config(cmd: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join(format!("{cmd}.json"));
    fs::write(&path, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FAMILY: &str = r#"[
    {"omega": 1.0, "x0": [0.0], "v": [4.0], "mu": 1.0},
    {"omega": 1.0, "x0": [0.0], "v": [-4.0], "mu": 1.0}
]"#;

fn construct_config(schedule: &str) -> String {
    format!(
        r#"{{
  "schema": 1,
  "grid": {{"dim": 1, "n": [1024], "length": [128.0]}},
  "family": {FAMILY},
  "evolve": {{"dt": 0.002, "mu1": 1.0, "mu2": 1.0, "beta": 0.5, "record_every": 50}},
  "experiment": {{"t0": 1.0, "schedule": {schedule}}}
}}"#
    )
}

#[test]
fn ground_state_writes_profile_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("ground-state", r#"{"schema": 1, "grid": {"dim": 1, "n": [512], "length": [64.0]}}"#, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("profile.json")).unwrap()).unwrap();
    assert_eq!(side["kind"], "closed_form1d");
    assert!(side["residual"].as_f64().unwrap() < 1e-8);
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(csv.starts_with("x,re1,im1,abs1\n"));
    assert_eq!(fs::metadata(out.join("profile.bin")).unwrap().len(), 8 * (3 + 2 * 512));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("ground-state", "{\n  \"schema\": 1,\n  \"grid\": {\"dim\": 1, \"n\": [512]\n", dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 4, column"), "{}", stderr(&o));

    let o = run_config(
        "ground-state",
        r#"{"schema": 1, "grid": {"dim": 1, "n": [512], "length": [64.0]}, "colour": "red"}"#,
        dir.path(),
        &[],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("colour"));

    let o = run_config("ground-state", r#"{"schema": 1, "grid": {"dim": 1, "n": [500], "length": [64.0]}}"#, dir.path(), &[]);
    assert_eq!(code(&o), 1);

    let missing = run(&["ground-state", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&missing), 1);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn dry_run_prints_derived_quantities_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("construct", &construct_config("[4.0, 6.0]"), dir.path(), &["--dry-run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("v_star = 8\n"), "{text}");
    assert!(text.contains("omega_star = 0.25\n"));
    assert!(text.contains("rate = 4\n"));
    assert!(text.contains("box_ok = true"));
    assert!(!dir.path().join("out").exists());

    let bad = construct_config("[4.0, 6.0]").replace("\"mu1\": 1.0", "\"mu1\": 2.0");
    assert_eq!(code(&run_config("construct", &bad, dir.path(), &["--dry-run"])), 1);
}

#[test]
fn construct_writes_deterministic_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("construct", &construct_config("[2.0, 3.0]"), dir.path(), &["--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let first = fs::read(out.join("run_T2.csv")).unwrap();
    let header = String::from_utf8(first.clone()).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with(
        "t,err_H1,bound,err_L2,action_drift,interaction_plain,interaction_grad,overlap,tail_mass,source_norm,bootstrap_flag"
    ));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rate"], 4.0);
    assert_eq!(summary["cauchy"].as_array().unwrap().len(), 1);
    assert!(summary["metadata"]["created_unix"].is_u64());
    assert!(out.join("run_T3_state_T0.bin").exists());

    let o = run_config("construct", &construct_config("[2.0, 3.0]"), dir.path(), &["--jobs", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.join("run_T2.csv")).unwrap(), first);
}

#[test]
fn evolve_zero_data_and_invariant_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "schema": 1,
  "grid": {"dim": 1, "n": [64], "length": [20.0]},
  "initial": {"kind": "zero"},
  "t_end": 0.1,
  "evolve": {"dt": 0.01, "mu1": 1.0, "mu2": 1.0, "beta": 0.5}
}"#;
    let o = run_config("evolve", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,E1,E2,Etot,M1,M2,Px_tot,overlap");
    assert_eq!(lines.len(), 12);
    assert!(lines[1..].iter().all(|l| l.split(',').skip(1).all(|x| x.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn evolve_tracks_a_single_soliton() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "schema": 1,
  "grid": {"dim": 1, "n": [1024], "length": [128.0]},
  "initial": {"kind": "solitons"},
  "family": [
    {"omega": 1.0, "x0": [-20.0], "v": [2.0], "mu": 1.0},
    {"omega": 1.0, "x0": [20.0], "v": [0.0], "mu": 1.0}
  ],
  "t_end": 1.0,
  "evolve": {"dt": 0.001, "mu1": 1.0, "mu2": 1.0, "beta": 0.0, "record_every": 100, "snapshot_every": 500}
}"#;
    let o = run_config("evolve", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["final_soliton_error"].as_f64().unwrap() < 1e-5);
    assert!(summary["mass_drift"][0].as_f64().unwrap() < 1e-12);
    assert_eq!(summary["snapshot_times"].as_array().unwrap().len(), 3);
    let snaps = multispeed_core::io::load_fields(&dir.path().join("out/snapshots.bin")).unwrap();
    assert_eq!(snaps.len(), 6);
}

#[test]
fn non_finite_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(1, &[64], &[20.0]).unwrap();
    let mut bad = ComplexField::zeros(&g);
    bad.values[3] = C64::new(f64::NAN, 0.0);
    let path = dir.path().join("bad.bin");
    save_pair(&path, &FieldPair::new(bad, ComplexField::zeros(&g)).unwrap()).unwrap();
    let cfg = format!(
        r#"{{"schema": 1, "grid": {{"dim": 1, "n": [64], "length": [20.0]}},
  "initial": {{"kind": "file", "path": {:?}}}, "t_end": 0.1,
  "evolve": {{"dt": 0.01, "mu1": 1.0, "mu2": 1.0, "beta": 0.5}}}}"#,
        path.to_str().unwrap()
    );
    let o = run_config("evolve", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn solver_and_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    // one eigenvalue of L₊ is -3, so the window holds no positive eigenvalue
    let cfg = r#"{"schema": 1, "grid": {"dim": 1, "n": [512], "length": [64.0]}, "k": 1}"#;
    assert_eq!(code(&run_config("spectrum", cfg, dir.path(), &[])), 2);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg_path = dir.path().join("g.json");
    fs::write(&cfg_path, r#"{"schema": 1, "grid": {"dim": 1, "n": [512], "length": [64.0]}}"#).unwrap();
    let o = run(&["ground-state", "--config", cfg_path.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn spectrum_report_targets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": 1, "grid": {"dim": 1, "n": [512], "length": [64.0]}, "k": 3,
  "coercivity": {"trials": 10, "seed": 7}}"#;
    let o = run_config("spectrum", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    assert!((s["plus_eigenvalues"][0].as_f64().unwrap() + 3.0).abs() < 1e-3);
    assert!(s["plus_eigenvalues"][1].as_f64().unwrap().abs() < 1e-6);
    assert!(s["minus_eigenvalues"][0].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(s["nu0"], 3);
    assert!(s["coercivity"]["c0"].as_f64().unwrap() > 0.0);
    assert_eq!(multispeed_core::io::load_fields(&out.join("lplus_eigenfunctions.bin")).unwrap().len(), 3);
}

#[test]
fn soliton_and_scan_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"schema": 1, "grid": {{"dim": 1, "n": [1024], "length": [128.0]}}, "family": {FAMILY}, "t": 1.0}}"#
    );
    let o = run_config("soliton", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let pair = multispeed_core::io::load_pair(&out.join("solitons.bin")).unwrap();
    assert!((pair.first.norm_l2_squared() - 4.0).abs() < 1e-10);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solitons.json")).unwrap()).unwrap();
    assert_eq!(s["v_star"], 8.0);

    let scan = construct_config("[2.0]").replacen("\"schema\": 1,", "\"schema\": 1, \"speeds\": [0.0, 8.0],", 1);
    let o = run_config("scan", &scan, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scan.json")).unwrap()).unwrap();
    assert_eq!(s["points"].as_array().unwrap().len(), 2);
    assert_eq!(s["points"][0]["informative"], false);
}
