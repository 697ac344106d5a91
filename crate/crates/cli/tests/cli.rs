use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn transdev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transdev"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn converge(config: &str, extra: &[&str]) -> (tempfile::TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), config);
    let out = dir.path().join("out");
    let mut args = vec!["converge", "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = transdev(&args);
    (dir, o)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn flat_torsion_study_passes() {
    let (dir, o) = converge(
        r#"{"scenario": "flat-torsion", "run": {"equations": ["E4_4", "E3_1", "E5_2"]}}"#,
        &["--quiet"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let r = report(dir.path());
    let reps = r["reports"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    for eq in ["E4_4", "E5_2"] {
        let e = reps.iter().find(|x| x["eq"] == eq).unwrap();
        assert!(e["fitted_order"].as_f64().unwrap() >= 1.9, "{eq}");
        assert_eq!(e["passed"], true);
    }
    let e31 = reps.iter().find(|x| x["eq"] == "E3_1").unwrap();
    assert_eq!(e31["floor_detected"], true);
    assert_eq!(r["all_passed"], true);
    assert_eq!(r["config"]["scenario"], "flat-torsion");
    assert!(r["tolerances"]["rel_tol"].as_f64().unwrap() > 0.0);
    assert!(r["versions"]["transdev"].is_string());
    assert!(r["total_wall_time_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn csv_has_one_row_per_cell() {
    let (dir, o) = converge(
        r#"{"scenario": "sphere", "run": {"equations": ["E2_10", "E4_4"], "epsilon_ladder": [0.08, 0.04, 0.02, 0.01, 0.005]}}"#,
        &["--quiet"],
    );
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(dir.path().join("out/samples.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["equation", "scenario", "s", "epsilon", "residual_norm", "wall_time_ms"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 5);
    assert_eq!(&rows[0][0], "E2_10");
    assert_eq!(&rows[9][0], "E4_4");
    for row in &rows {
        assert_eq!(&row[1], "sphere");
        // 17 significant digits, round-trips exactly
        for col in 2..6 {
            let mantissa = row[col].split('e').next().unwrap();
            assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{}", &row[col]);
            let v: f64 = row[col].parse().unwrap();
            assert_eq!(format!("{v:.16e}"), row[col]);
        }
    }
    assert_eq!(rows[2][3].parse::<f64>().unwrap(), 0.02);
}

#[test]
fn exact_identity_never_fails_the_threshold() {
    let (dir, o) = converge(
        r#"{"scenario": "offset-transport+linear-drift", "run": {"equations": ["E5_1"]}}"#,
        &["--order-threshold", "50", "--quiet"],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["reports"][0]["exact"], true);
    assert_eq!(r["reports"][0]["passed"], true);
    assert_eq!(r["resolved"]["order_threshold"].as_f64(), Some(50.0));
}

#[test]
fn missed_threshold_exits_one_and_still_writes() {
    let (dir, o) = converge(
        r#"{"scenario": "sphere", "run": {"equations": ["E4_4"]}}"#,
        &["--order-threshold", "2.5"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(report(dir.path())["all_passed"], false);
}

#[test]
fn config_errors_exit_two_without_output() {
    for text in [
        r#"{"scenario": "no-such-family"}"#,
        r#"{"scenario": "sphere", "bogus": 1}"#,
        r#"{"scenario": "flat-torsion", "params": {"c": 40}}"#,
        r#"{"scenario": "sphere", "run": {"epsilon_ladder": [0.1, 0.2, 0.3, 0.4, 0.5]}}"#,
        r#"{"scenario": "sphere", "run": {"epsilon_ladder": [0.1, 0.05]}}"#,
        r#"{"scenario": "sphere", "run": {"rel_tol": -1}}"#,
        "not json",
    ] {
        let (dir, o) = converge(text, &[]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!o.stderr.is_empty());
        assert!(!dir.path().join("out").exists(), "{text}");
    }
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = transdev(&["converge", "--config", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let o = transdev(&["converge", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let (dir, o) = converge(r#"{"scenario": "sphere", "run": {"equations": ["E4_4"], "max_steps": 3}}"#, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out").exists());
}

fn inspect(args: &[&str]) -> Value {
    let mut a = vec!["inspect"];
    a.extend_from_slice(args);
    let o = transdev(&a);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn components(v: &Value) -> Vec<f64> {
    v["components"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn inspect_torsion_and_curvature() {
    let t = inspect(&["--scenario", "flat-torsion", "--what", "torsion"]);
    assert_eq!(t["shape"], serde_json::json!([2, 2, 2]));
    // T^1_{21} sits at row-major index (0, 1, 0)
    assert_eq!(components(&t)[2], 0.3);
    assert_eq!(components(&t)[1], -0.3);

    let c = inspect(&["--scenario", "flat-euclidean", "--what", "curvature", "--s", "-0.4", "--r", "0.2"]);
    assert_eq!(c["shape"], serde_json::json!([2, 2, 2, 2]));
    assert!(components(&c).iter().all(|v| *v == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": "sphere"}"#);
    let c = inspect(&["--config", &cfg, "--what", "curvature", "--point", "1.2,0.5"]);
    let th: f64 = 1.2;
    // R^θ_{φθφ} = sin²θ
    assert!((components(&c)[0b0101] - th.sin().powi(2)).abs() < 1e-8);
}

#[test]
fn inspect_s_tensor_and_transport() {
    let s = inspect(&["--scenario", "offset-transport", "--what", "s-tensor"]);
    assert!((components(&s)[3] - 0.2).abs() < 1e-15);
    assert!(components(&s).iter().enumerate().all(|(i, v)| i == 3 || v.abs() < 1e-15));

    let t = inspect(&["--scenario", "sphere", "--what", "transport", "--loop-latitude", "0.7853981633974483"]);
    let m = components(&t);
    let th = std::f64::consts::FRAC_PI_4;
    let a = 2.0 * std::f64::consts::PI * th.cos();
    let expect = [a.cos(), a.sin() * th.sin(), -a.sin() / th.sin(), a.cos()];
    for (e, g) in expect.iter().zip(&m) {
        assert!((e - g).abs() < 1e-6);
    }
    let flat = inspect(&["--scenario", "flat-euclidean", "--what", "transport", "--from", "-0.3", "--to", "0.4"]);
    assert_eq!(components(&flat), [1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn inspect_rejects_bad_arguments() {
    for args in [
        vec!["inspect", "--scenario", "flat-torsion", "--what", "transport", "--loop-latitude", "1.0"],
        vec!["inspect", "--scenario", "sphere", "--what", "transport", "--loop-latitude", "0.01"],
        vec!["inspect", "--scenario", "sphere", "--what", "holonomy"],
        vec!["inspect", "--scenario", "sphere", "--what", "torsion", "--point", "1.0"],
        vec!["inspect", "--scenario", "sphere", "--what", "torsion", "--s", "7"],
        vec!["inspect", "--scenario", "atlas", "--what", "torsion"],
        vec!["inspect", "--what", "torsion"],
    ] {
        let o = transdev(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn list_is_stable_json_with_seven_families() {
    let a = transdev(&["list"]);
    let b = transdev(&["list"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for fam in [
        "flat-euclidean",
        "flat-torsion",
        "sphere",
        "sphere-torsion",
        "minkowski",
        "offset-transport",
        "exp-transport",
    ] {
        assert!(names.contains(&fam), "{fam}");
    }
    assert!(v[1]["params"].as_array().unwrap().iter().any(|p| p["key"] == "c"));
}
