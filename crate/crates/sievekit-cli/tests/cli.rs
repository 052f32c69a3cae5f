//! End-to-end checks of the command-line contract: exit codes, report
//! shapes, determinism of seeded commands, and the documented flag surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sievekit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sievekit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_counts_csv(dir: &Path, name: &str) -> String {
    // n[1] = (900, 40, 60), n[0] = (800, 100, 100)
    let mut rows = vec!["a,y".to_string()];
    for (a, y, count) in [
        (1, 0, 900),
        (1, 1, 40),
        (1, 2, 60),
        (0, 0, 800),
        (0, 1, 100),
        (0, 2, 100),
    ] {
        for _ in 0..count {
            rows.push(format!("{a},{y}"));
        }
    }
    let path = dir.join(name);
    fs::write(&path, rows.join("\n") + "\n").unwrap();
    path.display().to_string()
}

fn report_json(dir: &Path) -> serde_json::Value {
    let body = fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&body).unwrap()
}

#[test]
fn analyze_ccs_with_katz_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_counts_csv(tmp.path(), "d.csv");
    let out = sievekit(
        &["analyze", "--data", &data, "--estimand", "ccs", "--ci", "katz-c", "--alpha", "0.05"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    let est = &report["estimates"][0];
    assert!((est["point"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(est["method"], "katz_c");
    assert!(est["ci"][0].as_f64().unwrap() < 2.0 / 3.0);
    assert!(tmp.path().join("manifest.json").exists());
    assert!(tmp.path().join("report.csv").exists());
}

#[test]
fn analyze_stratified_eie_reports_each_level() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = vec!["a,y,risk".to_string()];
    for (a, y, count, level) in [
        (1, 0, 450, "high"),
        (1, 1, 20, "high"),
        (1, 2, 30, "high"),
        (0, 0, 400, "high"),
        (0, 1, 50, "high"),
        (0, 2, 50, "high"),
        (1, 0, 200, "low"),
        (1, 1, 10, "low"),
        (1, 2, 10, "low"),
        (0, 0, 200, "low"),
        (0, 1, 12, "low"),
        (0, 2, 12, "low"),
    ] {
        for _ in 0..count {
            rows.push(format!("{a},{y},{level}"));
        }
    }
    let data = tmp.path().join("strata.csv");
    fs::write(&data, rows.join("\n") + "\n").unwrap();
    let out = sievekit(
        &[
            "analyze",
            "--data",
            data.to_str().unwrap(),
            "--estimand",
            "eie",
            "--stratify",
            "risk",
            "--ci",
            "none",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    let strata: Vec<String> = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["stratum"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(strata, vec!["marginal", "risk=high", "risk=low"]);
}

#[test]
fn analyze_dichotomizes_distances() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = vec!["a,infected,d".to_string()];
    for (a, infected, d, count) in [
        (1, 1, "0.3", 40),
        (1, 1, "0.9", 60),
        (1, 0, "", 900),
        (0, 1, "0.2", 100),
        (0, 1, "0.8", 100),
        (0, 0, "", 800),
    ] {
        for _ in 0..count {
            rows.push(format!("{a},{infected},{d}"));
        }
    }
    let data = tmp.path().join("marks.csv");
    fs::write(&data, rows.join("\n") + "\n").unwrap();
    let out = sievekit(
        &["analyze", "--data", data.to_str().unwrap(), "--threshold", "0.5", "--ci", "none"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    assert!((report["estimates"][0]["point"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn exit_codes_partition_error_classes() {
    let tmp = tempfile::tempdir().unwrap();

    // usage: conflicting flags
    let data = write_counts_csv(tmp.path(), "d.csv");
    let out = sievekit(
        &["analyze", "--data", &data, "--estimand", "eet", "--exposure-ratio", "2", "--ir0", "1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    // data: missing column named in the message
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,0\n").unwrap();
    let out = sievekit(&["analyze", "--data", bad.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'y'"));

    // degeneracy: empty event cells
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "a,y\n1,0\n0,0\n").unwrap();
    let out = sievekit(&["analyze", "--data", empty.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bounds_from_probabilities() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sievekit(&["bounds", "--p", "0.10,0.05,0.20,0.10"], tmp.path());
    assert!(out.status.success());
    let report = report_json(tmp.path());
    assert!((report["bounds"][0]["lo"].as_f64().unwrap() - 0.10).abs() < 1e-12);
    assert!((report["bounds"][0]["hi"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn bounds_rejects_out_of_regime_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sievekit(&["bounds", "--p", "0.05,0.10,0.20,0.10"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_writes_all_artifacts_and_is_deterministic() {
    let tmp1 = tempfile::tempdir().unwrap();
    let tmp2 = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--scenario",
        "d3_noratio",
        "--n-grid",
        "1e3,5e3",
        "--reps",
        "4",
        "--seed",
        "9",
        "--plot",
        "conv.svg",
    ];
    for dir in [tmp1.path(), tmp2.path()] {
        let mut full = vec!["--out-dir", dir.to_str().unwrap()];
        let mut argv: Vec<&str> = args.to_vec();
        argv.append(&mut full);
        let out = sievekit(&argv, dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for artifact in ["report.json", "report.csv", "results.csv", "conv.svg", "manifest.json"] {
            assert!(dir.join(artifact).exists(), "missing {artifact}");
        }
    }
    for artifact in ["report.json", "results.csv", "conv.svg"] {
        let a = fs::read(tmp1.path().join(artifact)).unwrap();
        let b = fs::read(tmp2.path().join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn thread_cap_changes_speed_only_never_results() {
    let tmp1 = tempfile::tempdir().unwrap();
    let tmp2 = tempfile::tempdir().unwrap();
    for (dir, threads) in [(tmp1.path(), "1"), (tmp2.path(), "4")] {
        let out = Command::new(env!("CARGO_BIN_EXE_sievekit"))
            .args([
                "simulate",
                "--scenario",
                "d1",
                "--n-grid",
                "2e3",
                "--reps",
                "6",
                "--seed",
                "3",
                "--out-dir",
                dir.to_str().unwrap(),
            ])
            .env("SIEVEKIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    assert_eq!(
        fs::read(tmp1.path().join("report.json")).unwrap(),
        fs::read(tmp2.path().join("report.json")).unwrap()
    );
}

fn write_tte_csv(dir: &Path) -> String {
    let tmp_out = dir.join("ttegen");
    fs::create_dir_all(&tmp_out).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sievekit"))
        .args([
            "simulate",
            "--scenario",
            "tte_rare",
            "--export-n",
            "12000",
            "--seed",
            "5",
            "--out",
            "tte.csv",
            "--out-dir",
            tmp_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    tmp_out.join("tte.csv").display().to_string()
}

#[test]
fn tte_bootstrap_interval_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_tte_csv(tmp.path());
    let run = |dir: &Path| {
        let out = sievekit(
            &[
                "tte",
                "--data",
                &data,
                "--method",
                "cox",
                "--boot-reps",
                "150",
                "--seed",
                "7",
                "--out-dir",
                dir.to_str().unwrap(),
            ],
            dir,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        report["estimates"][0]["ci"].clone()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}

#[test]
fn tte_nelson_aalen_window_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_tte_csv(tmp.path());
    let out = sievekit(
        &["tte", "--data", &data, "--method", "nelson-aalen", "--window", "1:3", "--out-dir", tmp.path().to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    assert_eq!(report["estimates"].as_array().unwrap().len(), 1);
    assert_eq!(report["estimates"][0]["route"], "window=1:3");
}

#[test]
fn test_command_reports_composite_null() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_tte_csv(tmp.path());
    let out = sievekit(
        &[
            "test",
            "--data",
            &data,
            "--null",
            "h0w",
            "--windows",
            "1:6,7:12",
            "--out-dir",
            tmp.path().to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    assert_eq!(report["result"]["null_id"], "h0w");
    assert_eq!(report["result"]["detail"].as_array().unwrap().len(), 2);
    assert!(report["result"]["note"].as_str().unwrap().contains("composite"));
}

#[test]
fn validate_reports_violations_with_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("v.csv");
    fs::write(&data, "a,y,e\n1,1,1\n1,2,1\n0,1,0\n0,0,B\n").unwrap();
    let out = sievekit(
        &["validate", "--data", data.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success());
    let report = report_json(tmp.path());
    let counts = &report["validation"]["counts"];
    assert_eq!(counts["A5"], 1);
    assert_eq!(counts["A4"], 1);
    assert_eq!(counts["A1"], 1);
    let lines: Vec<u64> = report["validation"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["line"].as_u64().unwrap())
        .collect();
    assert_eq!(lines, vec![2, 3, 4]);
}

#[test]
fn analyze_eet_with_trinomial_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_counts_csv(tmp.path(), "d.csv");
    let out = sievekit(
        &["analyze", "--data", &data, "--estimand", "eet", "--ci", "trinomial-f"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    let est = &report["estimates"][0];
    // treated counts 40 and 60 with the exposure ratio assumed 1
    assert!((est["point"].as_f64().unwrap() - 40.0 / 60.0).abs() < 1e-12);
    assert_eq!(est["method"], "trinomial_f");
    assert_eq!(est["route"], "assumed-equal");
    let lo = est["ci"][0].as_f64().unwrap();
    let hi = est["ci"][1].as_f64().unwrap();
    assert!(lo < 40.0 / 60.0 && 40.0 / 60.0 < hi);
}

#[test]
fn analyze_flags_heterogeneous_strata() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = vec!["a,y,risk".to_string()];
    // strong variant-1 protection in one stratum only: per-level EIEs differ
    // by far more than a factor of two
    for (a, y, count, level) in [
        (1, 0, 460, "high"),
        (1, 1, 10, "high"),
        (1, 2, 30, "high"),
        (0, 0, 400, "high"),
        (0, 1, 50, "high"),
        (0, 2, 50, "high"),
        (1, 0, 160, "low"),
        (1, 1, 30, "low"),
        (1, 2, 10, "low"),
        (0, 0, 176, "low"),
        (0, 1, 12, "low"),
        (0, 2, 12, "low"),
    ] {
        for _ in 0..count {
            rows.push(format!("{a},{y},{level}"));
        }
    }
    let data = tmp.path().join("het.csv");
    fs::write(&data, rows.join("\n") + "\n").unwrap();
    let out = sievekit(
        &["analyze", "--data", data.to_str().unwrap(), "--estimand", "eie", "--stratify", "risk", "--ci", "none"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    assert!(report["heterogeneity_warning"].as_str().is_some());
}

#[test]
fn analyze_exposure_conditional_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = vec!["a,y,e".to_string()];
    for (a, y, e, count) in [
        (1, 1, "1", 20),
        (1, 0, "1", 80),
        (1, 2, "2", 30),
        (1, 0, "2", 170),
        (1, 0, "0", 100),
        (0, 1, "1", 40),
        (0, 0, "1", 60),
        (0, 2, "2", 20),
        (0, 0, "2", 80),
        (0, 0, "0", 100),
    ] {
        for _ in 0..count {
            rows.push(format!("{a},{y},{e}"));
        }
    }
    let data = tmp.path().join("exposed.csv");
    fs::write(&data, rows.join("\n") + "\n").unwrap();
    let out = sievekit(
        &["analyze", "--data", data.to_str().unwrap(), "--estimand", "ccs", "--mode", "exposure", "--ci", "katz-c"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = report_json(tmp.path());
    let est = &report["estimates"][0];
    // (0.2/0.4) / (0.15/0.2) = 2/3 from the exposure-conditional cells
    assert!((est["point"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    // ledger drops the stable-exposure-ratios assumption in this mode
    let ledger: Vec<&str> =
        est["assumptions"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert!(!ledger.contains(&"A6"));
}
