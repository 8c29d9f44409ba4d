use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bssanova(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bssanova"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_data(dir: &Path) -> String {
    let mut text = String::from("a,b,y\n");
    for k in 0..60 {
        let a = k as f64 / 59.0;
        let b = ((k * 7) % 13) as f64 / 12.0;
        text.push_str(&format!("{a},{b},{}\n", (3.0 * a).sin() + 0.5 * b));
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const QUICK: [&str; 6] = ["--draws", "200", "--burn-in", "100", "--tolerance", "2"];

fn fit(data: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--data", data, "--target", "y", "--out", out.to_str().unwrap(), "--seed", "7"];
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(extra);
    bssanova(&args)
}

#[test]
fn missing_target_column_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("o");
    let mut args = vec!["fit", "--data", &data, "--target", "nope", "--out", out.to_str().unwrap()];
    args.extend_from_slice(&QUICK);
    let o = bssanova(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("'nope'"), "stderr: {err}");
}

#[test]
fn repeated_fit_writes_identical_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert!(fit(&data, &o1, &[]).status.success());
    assert!(fit(&data, &o2, &[]).status.success());
    let read = |p: std::path::PathBuf| fs::read_to_string(p).unwrap();
    assert!(read(o1.join("model.json")) == read(o2.join("model.json")), "model.json differs");
    // Manifests differ only in the output directory they record.
    let manifest = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&read(dir.join("manifest.json"))).unwrap();
        v["config"]["out"] = serde_json::Value::Null;
        v
    };
    assert_eq!(manifest(&o1), manifest(&o2));
    assert!(o1.join("trace.csv").exists() && o1.join("timings.json").exists());
}

#[test]
fn bounds_present_only_with_uncertainty() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let fit_dir = dir.path().join("fit");
    assert!(fit(&data, &fit_dir, &[]).status.success());
    let model = fit_dir.join("model.json");
    let header = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["predict", "--model", model.to_str().unwrap(), "--data", &data, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = bssanova(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(out.join("predictions.csv")).unwrap();
        assert_eq!(text.lines().count(), 61);
        text.lines().next().unwrap().to_string()
    };
    assert_eq!(header(&[], "p1"), "mean");
    assert_eq!(header(&["--uncertainty", "--curves", "20"], "p2"), "mean,lower,upper");
}

#[test]
fn generate_sir_manifest_lists_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = bssanova(&["generate-sir", "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let schedules = manifest["results"]["schedules"].as_array().unwrap();
    assert_eq!(schedules.len(), 82);
    assert!(schedules.iter().any(|s| s["schedule"]["kind"] == "ramp"));
    assert!(schedules.iter().any(|s| s["schedule"]["kind"] == "sinusoid"));
    assert_eq!(manifest["config"]["seed"], 3);
}

#[test]
fn validation_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "selection": { "tolerance": 0 } }"#).unwrap();
    let out = dir.path().join("o");
    let o = bssanova(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["data:", "target:", "selection:"] {
        assert!(err.contains(needle), "missing '{needle}' in: {err}");
    }

    fs::write(&cfg, r#"{ "sed": 1 }"#).unwrap();
    let o = bssanova(&["generate-sir", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));
}

/// Two Torricelli tanks in series driven by a pump signal, sampled at dt = 1.
fn write_tanks(path: &Path) {
    let (k1, k2, k3) = (0.05, 0.04, 0.06);
    let (mut h1, mut h2) = (2.0f64, 1.5f64);
    let mut text = String::from("u,h1,h2\n");
    for k in 0..300 {
        let u = 3.0 + 1.5 * (k as f64 / 23.0).sin() + if (k / 40) % 2 == 0 { 0.8 } else { -0.8 };
        text.push_str(&format!("{u},{h1},{h2}\n"));
        for _ in 0..100 {
            let dh1 = -k1 * h1.sqrt() + 0.02 * u;
            let dh2 = k2 * h1.sqrt() - k3 * h2.sqrt();
            h1 += 0.01 * dh1;
            h2 += 0.01 * dh2;
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn tanks_cross_validation_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tanks.csv");
    write_tanks(&csv);
    let out = dir.path().join("o");
    let o = bssanova(&[
        "sysid", "--tanks", csv.to_str().unwrap(), "--cv", "--folds", "3", "--skip-initial", "5",
        "--draws", "200", "--burn-in", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    let deriv = m["derivative_mae"].as_array().unwrap();
    assert_eq!(deriv.len(), 3);
    assert!(deriv.iter().all(|f| f.as_array().unwrap().len() == 2));
    assert_eq!(m["timeseries"].as_array().unwrap().len(), 3);
    // Derivatives are of order 0.05; a working fit is far below that.
    let mae = deriv[1][0].as_f64().unwrap();
    assert!(mae < 5e-3, "h1 derivative MAE {mae}");
}
