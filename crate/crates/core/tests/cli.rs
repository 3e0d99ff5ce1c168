use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_logmarkov"));
    c.env("LOGMARKOV_THREADS", "2");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(name)
}

fn run(args: &[&str], spec: &Path) -> Output {
    bin().args(args).arg("--spec").arg(spec).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}{}", stdout(o), stderr(o)))
}

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn flip_spec(q: f64) -> String {
    format!(
        r#"{{
  "layout": {{"nL": 1, "nS": 1, "nA": 0}},
  "code": {{"type": "repetition", "repeats": 3}},
  "decoder": {{"1": "X"}},
  "noise": [{{"pauli": "X|I||III", "prob": {q}}}]
}}"#
    )
}

#[test]
fn bundled_specs_validate_cleanly() {
    for name in ["repetition_flip.json", "randomized_noisy.json"] {
        let o = run(&["validate"], &bundled(name));
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("status: clean"));
    }
}

#[test]
fn corrupted_probability_reports_its_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("randomized_noisy.json"))
        .unwrap()
        .replace("\"prob\": 0.0012", "\"prob\": -0.0012");
    let spec = write_spec(dir.path(), "bad.json", &text);
    let o = run(&["validate"], &spec);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("$.noise[1].prob"), "{}", stderr(&o));

    let over = write_spec(dir.path(), "over.json", &flip_spec(1.5));
    let o = run(&["validate"], &over);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("$.noise[0].prob"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "broken.json",
        "{\n  \"layout\": {\"nL\": 1,,}\n}",
    );
    let o = run(&["validate"], &spec);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2 column"), "{}", stderr(&o));
}

#[test]
fn even_repetition_warns_about_randomization() {
    let o = run(
        &["validate", "--format", "json"],
        &bundled("even_repetition.json"),
    );
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let warnings: Vec<&str> = v["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_str().unwrap())
        .collect();
    assert!(warnings
        .iter()
        .any(|w| w.contains("even") && w.contains("randomize_syndrome")));
    assert_eq!(v["smip"], Value::Bool(false));
}

#[test]
fn analyze_noiseless_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "clean.json", &flip_spec(0.0));
    let o = run(&["analyze", "--format", "json"], &spec);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["f1"].as_f64(), Some(1.0));
    for (_, chi) in v["chi"].as_object().unwrap() {
        assert_eq!(chi.as_f64(), Some(1.0));
    }
}

#[test]
fn analyze_flip_model_matches_closed_form() {
    let o = run(
        &["analyze", "--format", "json"],
        &bundled("repetition_flip.json"),
    );
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert!((v["chi"]["Z"].as_f64().unwrap() - 0.99).abs() < 1e-12);
    assert!((v["eps1"].as_f64().unwrap() - 0.005).abs() < 1e-12);
    assert_eq!(v["hypothesis_ok"], Value::Bool(true));
    assert!(v.get("watermark").is_none());
}

#[test]
fn analyze_above_threshold_still_emits_a_watermarked_model() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "noisy.json", &flip_spec(0.05));
    let out = dir.path().join("out");
    let o = bin()
        .args(["analyze", "--format", "json", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["hypothesis_ok"], Value::Bool(false));
    assert_eq!(v["watermark"], Value::from("hypotheses not satisfied"));
    assert!(v["hypothesis_failures"][0]
        .as_str()
        .unwrap()
        .contains("1/64"));
    assert!(stderr(&o).contains("hypotheses not satisfied"));
    for f in [
        "model.json",
        "summary.txt",
        "transfer.csv",
        "first_order.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let transfer = std::fs::read_to_string(out.join("transfer.csv")).unwrap();
    assert!(
        transfer.starts_with("# hypotheses not satisfied\ns_out,s_in,pauli,gamma,weighted_eigen\n")
    );
}

#[test]
fn verify_requires_hypotheses_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "noisy.json", &flip_spec(0.05));
    let o = run(&["verify"], &spec);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    let o = run(&["verify", "--force", "--format", "json"], &spec);
    let v = json(&o);
    assert_eq!(v["watermark"], Value::from("hypotheses not satisfied"));
    assert_eq!(
        o.status.code(),
        Some(if v["all_pass"].as_bool().unwrap() {
            0
        } else {
            1
        })
    );
}

#[test]
fn verify_noiseless_and_flip_models_have_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    for (name, q) in [("clean.json", 0.0), ("flip.json", 0.005)] {
        let spec = write_spec(dir.path(), name, &flip_spec(q));
        let o = run(&["verify", "--format", "json"], &spec);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v = json(&o);
        assert_eq!(v["all_pass"], Value::Bool(true));
        assert!(v["max_eigen_gap"].as_f64().unwrap() <= 1e-15, "{v}");
        assert_eq!(v["eigen_checks"].as_u64(), Some(4 * 30));
    }
}

#[test]
fn verify_writes_tables_and_exit_status_matches_pass_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = bin()
        .args(["verify", "--kmin", "1", "--kmax", "30", "--spec"])
        .arg(bundled("randomized_noisy.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let eigen = std::fs::read_to_string(out.join("eigen_checks.csv")).unwrap();
    let mut lines = eigen.lines();
    assert_eq!(
        lines.next(),
        Some("prep,meas,pauli,k,exact,model,gap,bound,within_bound,pass")
    );
    let all_pass = lines.all(|l| l.ends_with(",true"));
    let probability = std::fs::read_to_string(out.join("probability_checks.csv")).unwrap();
    let all_pass = all_pass && probability.lines().skip(1).all(|l| l.ends_with(",true"));
    assert!(all_pass);
    assert_eq!(o.status.code(), Some(0));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["all_pass"], Value::Bool(true));
    assert_eq!(summary["eigen_checks"].as_u64(), Some(2 * 2 * 4 * 30));
}

#[test]
fn simulate_noiseless_puts_every_shot_on_the_prepared_state() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "clean.json", &flip_spec(0.0));
    let o = bin()
        .args([
            "simulate", "--kmin", "0", "--kmax", "5", "--shots", "500", "--spec",
        ])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("prep,meas,k,outcome,count,shots,frequency,exact,seed")
    );
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let expected = if f[3] == "0" { "500" } else { "0" };
        assert_eq!(f[4], expected, "{line}");
    }
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let spec = bundled("randomized_noisy.json");
    let go = |seed: &str, threads: &str| {
        bin()
            .env("LOGMARKOV_THREADS", threads)
            .args([
                "simulate", "--kmax", "6", "--shots", "2000", "--seed", seed, "--spec",
            ])
            .arg(&spec)
            .output()
            .unwrap()
            .stdout
    };
    let a = go("7", "1");
    assert_eq!(a, go("7", "3"));
    assert_ne!(a, go("8", "1"));
}

#[test]
fn simulate_flip_model_frequencies_lie_in_the_confidence_interval() {
    let dir = tempfile::tempdir().unwrap();
    let q: f64 = 0.05;
    let spec = write_spec(dir.path(), "flip.json", &flip_spec(q));
    let shots = 100_000u64;
    let o = bin()
        .args([
            "simulate",
            "--kmin",
            "1",
            "--kmax",
            "10",
            "--shots",
            &shots.to_string(),
            "--seed",
            "3",
            "--spec",
        ])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let k: i32 = f[2].parse().unwrap();
        let exact: f64 = f[7].parse().unwrap();
        let p0 = (1.0 + (1.0 - 2.0 * q).powi(k)) / 2.0;
        let expected = if f[3] == "0" { p0 } else { 1.0 - p0 };
        assert!((exact - expected).abs() < 1e-12);
        let freq: f64 = f[6].parse().unwrap();
        let sd = (expected * (1.0 - expected) / shots as f64).sqrt();
        assert!((freq - expected).abs() <= 5.0 * sd, "{line}");
    }
}

fn write_series(dir: &Path, rows: &[(f64, f64)]) -> PathBuf {
    let mut text = String::from("K,value\n");
    for (k, v) in rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    write_spec(dir, "series.csv", &text)
}

fn fit(path: &Path) -> Value {
    let o = bin()
        .args(["fit", "--format", "json", "--data"])
        .arg(path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    json(&o)
}

#[test]
fn fit_exact_and_constant_series() {
    let dir = tempfile::tempdir().unwrap();
    let q: f64 = 0.05;
    let rows: Vec<(f64, f64)> = (1..=20)
        .map(|k| (f64::from(k), (1.0 - 2.0 * q).powi(k)))
        .collect();
    let v = fit(&write_series(dir.path(), &rows));
    assert!((v["chi"].as_f64().unwrap() - 0.9).abs() < 1e-6);
    assert!((v["amplitude"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["method"], Value::from("log-linear"));

    let rows: Vec<(f64, f64)> = (1..=8).map(|k| (f64::from(k), 0.42)).collect();
    let v = fit(&write_series(dir.path(), &rows));
    assert!((v["chi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["amplitude"].as_f64().unwrap() - 0.42).abs() < 1e-12);
}

#[test]
fn fit_monte_carlo_series_within_three_bootstrap_errors() {
    let dir = tempfile::tempdir().unwrap();
    let q: f64 = 0.05;
    let spec = write_spec(dir.path(), "flip.json", &flip_spec(q));
    let o = bin()
        .args([
            "simulate", "--kmin", "1", "--kmax", "20", "--shots", "100000", "--seed", "11",
            "--spec",
        ])
        .arg(&spec)
        .output()
        .unwrap();
    let mut rows = Vec::new();
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[3] == "0" {
            let freq: f64 = f[6].parse().unwrap();
            rows.push((f[2].parse::<f64>().unwrap(), 2.0 * freq - 1.0));
        }
    }
    assert_eq!(rows.len(), 20);
    let chi = fit(&write_series(dir.path(), &rows))["chi"]
        .as_f64()
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let estimates: Vec<f64> = (0..400)
        .filter_map(|_| {
            let sample: Vec<(f64, f64)> = (0..rows.len())
                .map(|_| rows[rng.random_range(0..rows.len())])
                .collect();
            let (ks, vs): (Vec<f64>, Vec<f64>) = sample.into_iter().unzip();
            logmarkov::fit::fit_decay(&ks, &vs, None)
                .ok()
                .map(|f| f.chi)
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let se = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
        / (estimates.len() - 1) as f64)
        .sqrt();
    assert!(
        (chi - (1.0 - 2.0 * q)).abs() <= 3.0 * se,
        "chi {chi}, bootstrap se {se}"
    );
}

#[test]
fn fit_reports_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_spec(dir.path(), "bad.csv", "K,value\n1,0.9\n2,abc\n");
    let o = bin().args(["fit", "--data"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn rejects_bad_thread_setting() {
    let o = bin()
        .env("LOGMARKOV_THREADS", "zero")
        .args(["validate", "--spec"])
        .arg(bundled("repetition_flip.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LOGMARKOV_THREADS"));
}
