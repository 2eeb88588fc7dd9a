use std::fs;
use std::path::Path;
use std::process::Command;

use r1glm::cli::{io::read_matrix, RunManifest, Truth};

fn r1glm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_r1glm"))
        .args(args)
        .env_remove("R1GLM_JOBS")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const MINIMAL: &str = r#"{
  "n_voxels": 10,
  "data": {
    "n_scans": 200,
    "n_conditions": 5,
    "seed": 1
  }
}"#;

#[test]
fn simulate_writes_reproducible_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", MINIMAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&a)]).0, 0);
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&b)]).0, 0);
    for f in ["bold.bin", "events.csv", "truth.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    for f in ["bold.bin", "events.csv", "truth.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let (ma, mb) = (
        RunManifest::read(&a).unwrap(),
        RunManifest::read(&b).unwrap(),
    );
    assert!(ma.verify(&a).is_empty());
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config_hash, mb.config_hash);
    // defaults are written out in full
    assert_eq!(ma.config["data"]["noise_sigma"], 0.5);
    assert_eq!(read_matrix(&a.join("bold.bin")).unwrap().shape(), (200, 10));
}

#[test]
fn csv_mode_matches_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", MINIMAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&a)]).0, 0);
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&b), "--csv"]).0, 0);
    assert_eq!(
        read_matrix(&a.join("bold.bin")).unwrap(),
        read_matrix(&b.join("bold.csv")).unwrap()
    );
}

#[test]
fn bad_configs_exit_with_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        "{\n  \"data\": {\n    \"tr\": 0\n  }\n}",
    );
    let (code, err) = r1glm(&["simulate", &cfg, "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");

    let typo = write(tmp.path(), "typo.json", "{\n  \"n_voxel\": 3\n}");
    let (code, err) = r1glm(&["simulate", &typo, "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");

    assert_eq!(r1glm(&["simulate"]).0, 2);
    assert_eq!(
        r1glm(&["fit", "missing-dir", "--out", "x", "--method", "nope"]).0,
        2
    );
}

#[test]
fn rank_one_on_the_fixed_basis_points_to_glm() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", MINIMAL);
    let data = tmp.path().join("data");
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&data)]).0, 0);
    let (code, err) = r1glm(&[
        "fit",
        &s(&data),
        "--out",
        &s(&tmp.path().join("f")),
        "--method",
        "r1glm",
        "--basis",
        "fixed",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("use glm"), "{err}");
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let m = read_matrix(path).unwrap();
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[test]
fn noiseless_round_trip_recovers_the_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "cfg.json",
        r#"{"n_voxels": 5, "data": {"n_scans": 200, "n_conditions": 5, "noise_sigma": 0.0, "seed": 2}}"#,
    );
    let data = tmp.path().join("data");
    let out = tmp.path().join("fit");
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&data)]).0, 0);
    assert_eq!(
        r1glm(&[
            "fit",
            &s(&data),
            "--out",
            &s(&out),
            "--method",
            "r1glm",
            "--jobs",
            "1"
        ])
        .0,
        0
    );
    let truth: Truth =
        serde_json::from_str(&fs::read_to_string(data.join("truth.json")).unwrap()).unwrap();
    let betas = rows(&out.join("betas.csv"));
    assert_eq!(betas.len(), 5);
    for (est, t) in betas.iter().zip(&truth.betas) {
        for (a, b) in est.iter().zip(t) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["converged"], 5);
    assert!(diag["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(RunManifest::read(&out).unwrap().verify(&out).is_empty());
}

#[test]
fn fit_outputs_do_not_depend_on_jobs_or_qr() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", MINIMAL);
    let data = tmp.path().join("data");
    assert_eq!(r1glm(&["simulate", &cfg, "--out", &s(&data)]).0, 0);
    let run = |name: &str, method: &str, basis: &str, extra: &[&str]| {
        let (data, out) = (s(&data), s(&tmp.path().join(name)));
        let mut args = vec![
            "fit", &data, "--out", &out, "--method", method, "--basis", basis,
        ];
        args.extend_from_slice(extra);
        assert_eq!(r1glm(&args).0, 0);
        tmp.path().join(name)
    };
    let one = run("one", "r1glms", "fir", &["--jobs", "1"]);
    let eight = run("eight", "r1glms", "fir", &["--jobs", "8"]);
    for f in ["betas.csv", "hrfs.csv"] {
        assert_eq!(
            fs::read(one.join(f)).unwrap(),
            fs::read(eight.join(f)).unwrap()
        );
    }
    assert_eq!(rows(&one.join("hrfs.csv"))[0].len(), 20);

    let qr = run("qr", "r1glm", "3hrf", &["--qr"]);
    let plain = run("plain", "r1glm", "3hrf", &["--no-qr"]);
    let (a, b) = (rows(&qr.join("betas.csv")), rows(&plain.join("betas.csv")));
    let worst = a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn benchmark_reports_ten_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bench.json",
        r#"{"n_voxels": 4, "fir_length": 12, "data": {"n_scans": 150, "n_runs": 3, "n_conditions": 4, "events_per_condition": 4, "n_features": 3, "peak_range": [3.5, 6.5], "noise_sigma": 0.3}}"#,
    );
    let out = tmp.path().join("bench");
    assert_eq!(r1glm(&["benchmark", &cfg, "--out", &s(&out)]).0, 0);
    let report: r1glm::eval::ScoreReport =
        serde_json::from_str(&fs::read_to_string(out.join("encoding.json")).unwrap()).unwrap();
    assert_eq!(report.methods.len(), 10);
    assert_eq!(report.comparisons.len(), 9);
    let csv = fs::read_to_string(out.join("identification.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 3);
    let manifest = RunManifest::read(&out).unwrap();
    assert_eq!(manifest.method_grid.len(), 10);
    assert!(manifest.verify(&out).is_empty());
}

#[test]
fn failing_method_leaves_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    // an FIR as long as a run leaves the rank-1 models unidentifiable
    let cfg = write(
        tmp.path(),
        "bench.json",
        r#"{"n_voxels": 2, "fir_length": 60, "data": {"n_scans": 60, "n_runs": 2, "n_conditions": 3, "events_per_condition": 3, "n_features": 2, "hrf_duration": 20}}"#,
    );
    let out = tmp.path().join("bench");
    let (code, err) = r1glm(&["benchmark", &cfg, "--out", &s(&out)]);
    assert_eq!(code, 3, "{err}");
    let partial: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("partial.json")).unwrap()).unwrap();
    assert!(partial["failed"].as_str().unwrap().contains("fir"));
    assert!(!partial["completed"].as_array().unwrap().is_empty());
    assert!(!out.join("encoding.json").exists());
}
