//! End-to-end tests against the compiled binary. Each test gets its own
//! temp directory as `KRFLOW_OUT`, so they are independent and parallel.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn krflow(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args(args)
        .env("KRFLOW_OUT", root.join("out"))
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn write_config(root: &Path, name: &str, body: &str) -> PathBuf {
    let path = root.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const ROUND_5: &str = r#"{
  "n": 24,
  "initial": {"family": "round"},
  "t_max": 5.0,
  "companions": [{"label": "one_plus_x", "init": "one_plus_x"}]
}"#;

#[test]
fn run_writes_artifacts_with_expected_row_count() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "round.json", ROUND_5);
    let out = krflow(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let dir = tmp.path().join("out/round");
    let csv = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,l2_u_tilde,l2_grad_u_tilde,l2_lap_u_tilde,c0_u_tilde,c0_grad_u_tilde,c0_lap_u_tilde,c0_R_minus_n,a,b,min_R,c0_profile_dist"
    );
    // floor(t_max / cadence) + 1 = 101 data rows.
    assert_eq!(lines.count(), 101);

    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["schema_version"], 1);
    assert_eq!(run["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(run["complete"], true);
    assert_eq!(run["rows"], 101);
    assert!(dir.join("trace.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "tiny.json",
        r#"{"n": 16, "initial": {"family": "beta", "beta": 0.1}, "t_max": 1.0,
            "policy": {"cadence": 0.05, "checkpoint_cadence": 0.25}}"#,
    );
    let run = |root: &Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_krflow"))
            .args(["run", config.to_str().unwrap()])
            .env("KRFLOW_OUT", root)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    };
    run(&tmp.path().join("a"));
    run(&tmp.path().join("b"));
    for name in ["trace.csv", "trace.json", "run.json"] {
        let a = fs::read(tmp.path().join("a/tiny").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b/tiny").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }
}

#[test]
fn invalid_initial_data_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    // h = 1 − 1.5(1−x²) dips negative mid-interval: rejected before stepping.
    let config = write_config(
        tmp.path(),
        "bad.json",
        r#"{"n": 16, "t_max": 1.0,
            "initial": {"family": "chebyshev-perturbation", "coeffs": [[0, -1.5]]}}"#,
    );
    let out = krflow(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("error"), "{}", stderr(&out));
    assert!(!tmp.path().join("out/bad").exists());
}

#[test]
fn malformed_json_reports_location_and_exits_one() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "broken.json", "{\"n\": 16,\n  \"t_max\": }");
    let out = krflow(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn verify_passes_a_complete_round_run() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "round.json", ROUND_5);
    assert_eq!(exit_code(&krflow(tmp.path(), &["run", config.to_str().unwrap()])), 0);
    let out = krflow(tmp.path(), &["verify", "out/round"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let verify: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/round/verify.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(verify["conclusion_violations"], 0);
    assert!(!verify["reports"].as_array().unwrap().is_empty());
}

#[test]
fn verify_flags_conclusion_violations_with_exit_two() {
    let tmp = TempDir::new().unwrap();
    // An unreachable residual tolerance turns the honest stencil error
    // into a conclusion violation; the exit code must say so.
    let config = write_config(
        tmp.path(),
        "strict.json",
        r#"{"n": 24, "initial": {"family": "beta", "beta": 0.1}, "t_max": 2.0,
            "policy": {"cadence": 0.05, "checkpoint_cadence": 0.05},
            "verification": {"evolution_residual_tol": 1e-12}}"#,
    );
    assert_eq!(exit_code(&krflow(tmp.path(), &["run", config.to_str().unwrap()])), 0);
    let out = krflow(tmp.path(), &["verify", "out/strict"]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    let verify: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/strict/verify.json")).unwrap(),
    )
    .unwrap();
    assert!(verify["conclusion_violations"].as_u64().unwrap() >= 1);
}

#[test]
fn verify_without_artifacts_exits_one() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir_all(tmp.path().join("out/empty")).unwrap();
    let out = krflow(tmp.path(), &["verify", "out/empty"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn sweep_summarizes_each_grid_point_and_orders_lengths() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "tmpl.json",
        r#"{"n": 24, "initial": {"family": "beta", "beta": 0.1}, "t_max": 2.0,
            "policy": {"cadence": 0.05, "checkpoint_cadence": 0.25}}"#,
    );
    let out = krflow(
        tmp.path(),
        &["sweep", config.to_str().unwrap(), "--grid", "beta=0.05,0.1,0.2"],
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let summary = fs::read_to_string(tmp.path().join("out/tmpl-sweep/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 4, "{summary}");
    let mabuchi: Vec<f64> = rows[1..]
        .iter()
        .map(|row| row.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    // Leading order, the path length grows with the perturbation size.
    assert!(mabuchi[0] < mabuchi[1] && mabuchi[1] < mabuchi[2], "{mabuchi:?}");
    assert!(tmp.path().join("out/tmpl-sweep/beta-0.2/run.json").exists());
}

#[test]
fn sweep_with_empty_grid_writes_header_only() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "tmpl.json",
        r#"{"n": 16, "initial": {"family": "beta", "beta": 0.1}, "t_max": 1.0}"#,
    );
    let out = krflow(tmp.path(), &["sweep", config.to_str().unwrap(), "--grid", "beta="]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let summary = fs::read_to_string(tmp.path().join("out/tmpl-sweep/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
    assert!(summary.starts_with("param,status"));
}

#[test]
fn refine_needs_at_least_two_levels() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "one.json",
        r#"{"n": 16, "initial": {"family": "beta", "beta": 0.1}, "t_max": 1.0}"#,
    );
    let out = krflow(tmp.path(), &["refine", config.to_str().unwrap(), "--levels", "32"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("two levels"), "{}", stderr(&out));
}

#[test]
fn refine_reports_inter_level_deltas_and_orders() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "ref.json",
        r#"{"n": 24, "initial": {"family": "beta", "beta": 0.1}, "t_max": 1.0,
            "policy": {"cadence": 0.05, "checkpoint_cadence": 0.05}}"#,
    );
    let out = krflow(
        tmp.path(),
        &["refine", config.to_str().unwrap(), "--levels", "24,32"],
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let refine: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/ref-refine/refine.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(refine["levels"].as_array().unwrap().len(), 2);
    // Halving the record cadence shrinks time-stencil residuals ≥ 4×,
    // i.e. the per-level series decreases and the fitted order exceeds 2.
    let series = refine["values"]["evolution_residuals/residual/potential_gibbs"]
        .as_array()
        .unwrap();
    let first = series[0].as_f64().unwrap();
    let second = series[1].as_f64().unwrap();
    assert!(first / second >= 4.0, "reduction only {first}/{second}");
    let order = refine["orders"]["evolution_residuals/residual/potential_gibbs"]
        .as_f64()
        .unwrap();
    assert!(order > 2.0, "fitted order {order}");
    assert!(tmp.path().join("out/ref-refine/level-32/trace.json").exists());
}

#[test]
fn report_prints_digest_from_artifacts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "tiny.json",
        r#"{"n": 16, "initial": {"family": "beta", "beta": 0.1}, "t_max": 1.0,
            "policy": {"cadence": 0.05, "checkpoint_cadence": 0.25}}"#,
    );
    assert_eq!(exit_code(&krflow(tmp.path(), &["run", config.to_str().unwrap()])), 0);
    let out = krflow(tmp.path(), &["report", "out/tiny"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("N = 16"), "{text}");
    assert!(text.contains("‖R−n‖_C⁰"), "{text}");
    assert!(text.contains("run `verify` to refresh"), "{text}");
}
