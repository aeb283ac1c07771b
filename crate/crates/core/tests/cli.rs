use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use ftsreg::experiments::{parse_csv, StudyResult, STUDY_RESULT_SCHEMA};
use ftsreg::regression::{estimate_filter, schedule, FilterBank, FilterBankJson};
use ftsreg::simulate::{simulate_pair, ProcessSpec, TruthManifest};
use ftsreg::spectral::{FuncSeries, SmoothingKernel};
use ftsreg::GridContext;

fn ftsreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftsreg"))
        .args(args)
        .env_remove("FTSREG_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_kernel_prints_moment_table() {
    let out = ftsreg(&["check-kernel", "--name", "epanechnikov"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("kernel epanechnikov (order 2)"));
    assert!(text.trim_end().ends_with("PASS"));
    let out = ftsreg(&["check-kernel", "--name", "quartic", "--order", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let out = ftsreg(&["check-kernel", "--name", "cosine"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    let out = ftsreg(&["estimate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("Usage"));
    assert_eq!(ftsreg(&[]).status.code(), Some(1));
    assert_eq!(ftsreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_passes() {
    let out = ftsreg(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["dft_parseval", "filter_roundtrip", "transfer_identity", "moments_", "tikhonov_residual"] {
        assert!(text.contains(name), "{name} missing");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn simulate_estimate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = ftsreg(&["simulate", "--T", "256", "--seed", "42", "--m", "32", "--out-dir", s(&sim)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let bank_path = dir.path().join("bank.json");
    let truth_path = sim.join("truth.json");
    let (x_path, y_path) = (sim.join("X.csv"), sim.join("Y.csv"));
    let args = [
        "estimate",
        "--x",
        s(&x_path),
        "--y",
        s(&y_path),
        "--alpha",
        "2",
        "--beta",
        "2",
        "--gamma",
        "0.25",
        "--lags",
        "3",
        "--truth",
        s(&truth_path),
        "--out",
        s(&bank_path),
    ];
    let out = ftsreg(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // compare the written bank against truth.json
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&bank_path).unwrap()).unwrap();
    let bank_json: FilterBankJson = serde_json::from_value(doc.clone()).unwrap();
    let bank = FilterBank::from_json(&bank_json).unwrap();
    let manifest: TruthManifest = serde_json::from_str(&fs::read_to_string(&truth_path).unwrap()).unwrap();
    let truth_bank = FilterBank::from_json(&manifest.filter).unwrap();
    let cli_err = bank.squared_distance(&truth_bank).unwrap();

    // the same pipeline in-process
    let spec = ProcessSpec::default();
    let grid = GridContext::new(32).unwrap();
    let pair = simulate_pair(&spec, grid, 256, 42).unwrap();
    let sched = schedule(2.0, 2.0, 0.25, 256).unwrap();
    let fit = estimate_filter(&pair.x, &pair.y, &SmoothingKernel::epanechnikov(), &sched, 3).unwrap();
    let lib_err = fit.bank.squared_distance(&pair.truth.filter()).unwrap();
    assert!((cli_err - lib_err).abs() <= 1e-12 * lib_err.max(1.0), "{cli_err} vs {lib_err}");

    let diag = &doc["diagnostics"];
    assert_eq!(diag["guard"], "ok");
    assert!(diag["imag_mass"].as_f64().unwrap() <= 1e-10);
    assert!(diag["parseval"]["rel_err"].as_f64().unwrap() <= 1e-10);
    let mse_freq = diag["truth"]["mse_freq"].as_f64().unwrap();
    let mse_lag = diag["truth"]["mse_lag"].as_f64().unwrap();
    assert!((mse_freq - 2.0 * std::f64::consts::PI * mse_lag).abs() <= 1e-9 * mse_freq);

    // CSV files match the library series bit for bit and their checksums
    let x = FuncSeries::read_csv(BufReader::new(fs::File::open(sim.join("X.csv")).unwrap())).unwrap();
    assert_eq!(x, pair.x);
    assert_eq!(manifest.sha256.len(), 2);

    // reruns are byte-identical, whatever the thread count
    let first = fs::read(&bank_path).unwrap();
    let mut threaded = args.to_vec();
    threaded.push("--threads");
    threaded.push("1");
    assert_eq!(ftsreg(&threaded).status.code(), Some(0));
    assert_eq!(fs::read(&bank_path).unwrap(), first);
    let sim2 = dir.path().join("sim2");
    ftsreg(&["simulate", "--T", "256", "--seed", "42", "--m", "32", "--out-dir", s(&sim2)]);
    for f in ["X.csv", "Y.csv", "truth.json"] {
        assert_eq!(fs::read(sim.join(f)).unwrap(), fs::read(sim2.join(f)).unwrap());
    }
}

#[test]
fn estimate_rejects_mismatched_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ftsreg(&["simulate", "--T", "64", "--seed", "1", "--out-dir", s(&a)]);
    ftsreg(&["simulate", "--T", "32", "--seed", "1", "--out-dir", s(&b)]);
    let (x_path, y_path) = (a.join("X.csv"), b.join("Y.csv"));
    let out = ftsreg(&[
        "estimate",
        "--x",
        s(&x_path),
        "--y",
        s(&y_path),
        "--alpha",
        "2",
        "--beta",
        "2",
        "--gamma",
        "0.25",
        "--lags",
        "2",
        "--out",
        s(&dir.path().join("bank.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("dimension"));
}

#[test]
fn estimate_guard_failure_exits_two() {
    // A single loud frequency: the quartic kernel's negative lobe one bin
    // away turns the smoothed spectral operator negative definite there.
    let dir = tempfile::tempdir().unwrap();
    let g = GridContext::new(4).unwrap();
    let x = FuncSeries::new(
        g,
        nalgebra::DMatrix::from_fn(32, 4, |t, k| {
            1e6 * (2.0 * std::f64::consts::PI * 3.0 * t as f64 / 32.0).cos() * (1.0 + k as f64)
        }),
    )
    .unwrap();
    let x_path = dir.path().join("X.csv");
    x.write_csv(fs::File::create(&x_path).unwrap()).unwrap();
    let out = ftsreg(&[
        "estimate",
        "--x",
        s(&x_path),
        "--y",
        s(&x_path),
        "--alpha",
        "2",
        "--beta",
        "2",
        "--gamma",
        "0.17",
        "--lags",
        "2",
        "--kernel",
        "quartic",
        "--out",
        s(&dir.path().join("bank.json")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("not positive definite"));
    assert!(!dir.path().join("bank.json").exists());
}

#[test]
fn bad_schedule_and_spec_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"rho": 1.5}"#).unwrap();
    let out = ftsreg(&["simulate", "--spec", s(&spec), "--T", "64", "--seed", "1", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&spec, r#"{"J": 4}"#).unwrap();
    let sim = dir.path().join("sim");
    let out = ftsreg(&["simulate", "--spec", s(&spec), "--T", "64", "--seed", "1", "--m", "16", "--out-dir", s(&sim)]);
    assert_eq!(out.status.code(), Some(0));
    let out = ftsreg(&[
        "estimate",
        "--x",
        s(&sim.join("X.csv")),
        "--y",
        s(&sim.join("Y.csv")),
        "--alpha",
        "2",
        "--beta",
        "2",
        "--gamma",
        "0.5",
        "--lags",
        "2",
        "--out",
        s(&dir.path().join("bank.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("gamma"));
}

#[test]
fn study_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    fs::write(
        &cfg,
        r#"{"m": 16, "spec": {"J": 4}, "T_list": [64, 128], "replicates": 2,
            "alpha": 2, "beta": 2, "gamma": 0.25, "L_eval": 2, "seed": 9}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ftsreg(&["study", "--config", s(&cfg), "--out-dir", s(&out_dir), "--plot"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["study.csv", "study.json", "study.svg", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = fs::read(out_dir.join("study.csv")).unwrap();
    assert_eq!(parse_csv(&csv).unwrap().len(), 2);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("study.json")).unwrap()).unwrap();
    let schema: serde_json::Value = serde_json::from_str(STUDY_RESULT_SCHEMA).unwrap();
    let validator = jsonschema::JSONSchema::compile(&schema).unwrap();
    assert!(validator.is_valid(&json));
    let parsed: StudyResult = serde_json::from_value(json).unwrap();
    assert_eq!(parsed.rows[1].t_len, 128);

    let again = dir.path().join("again");
    ftsreg(&["study", "--config", s(&cfg), "--out-dir", s(&again)]);
    assert_eq!(fs::read(again.join("study.json")).unwrap(), fs::read(out_dir.join("study.json")).unwrap());

    fs::write(&cfg, r#"{"T_list": [64], "replicates": 2, "alpha": 2, "beta": 2, "gamma": 0.25, "seed": 1, "extra": 1}"#).unwrap();
    let out = ftsreg(&["study", "--config", s(&cfg), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
}
