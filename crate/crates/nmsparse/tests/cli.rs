use nmsparse::builders::count_violations;
use nmsparse::io::{load_mask, save_matrix};
use nmsparse::synth::gaussian_matrix;
use nmsparse::tensor::NmConfig;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmsparse"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["mask", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_1() {
    let out = run(&[
        "mask",
        "--kind",
        "nm",
        "--n",
        "4",
        "--m",
        "8",
        "--in",
        "/nonexistent.npy",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    // missing --n/--m for an N:M strategy
    let dir = tempfile::tempdir().unwrap();
    let w_path = dir.path().join("w.npy");
    save_matrix(&w_path, &gaussian_matrix(8, 8, 0.0, 1.0, 1)).unwrap();
    let out = run(&["mask", "--kind", "nm", "--in", w_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["mask", "--kind", "nope", "--in", w_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mask_subcommand_writes_valid_npy_mask() {
    let dir = tempfile::tempdir().unwrap();
    let w_path = dir.path().join("w.npy");
    let mask_path = dir.path().join("mask.npy");
    save_matrix(&w_path, &gaussian_matrix(16, 16, 0.0, 1.0, 2)).unwrap();

    let out = run(&[
        "mask",
        "--kind",
        "transposable-opt",
        "--n",
        "4",
        "--m",
        "8",
        "--in",
        w_path.to_str().unwrap(),
        "--out",
        mask_path.to_str().unwrap(),
        "--report",
        "json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["kind"], "transposable-opt");
    assert_eq!(report["kept_count"], 128);

    let mask = load_mask(&mask_path).unwrap();
    let cfg = NmConfig::new(4, 8).unwrap();
    assert_eq!(count_violations(&mask, &cfg).unwrap(), (0, 0));
    assert_eq!(count_violations(&mask.transpose(), &cfg).unwrap(), (0, 0));
}

#[test]
fn csv_inputs_work_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let w_path = dir.path().join("w.csv");
    let mask_path = dir.path().join("mask.csv");
    save_matrix(&w_path, &gaussian_matrix(8, 8, 0.0, 1.0, 3)).unwrap();

    let out = run(&[
        "mask",
        "--kind",
        "nm",
        "--n",
        "2",
        "--m",
        "4",
        "--in",
        w_path.to_str().unwrap(),
        "--out",
        mask_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mask = load_mask(&mask_path).unwrap();
    assert_eq!(mask.zeros_count(), 32);
}

#[test]
fn diversity_prints_exact_and_scientific() {
    let out = run(&[
        "diversity",
        "--t",
        "64",
        "--n",
        "4",
        "--m",
        "8",
        "--structure",
        "structured",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        "576480100000000 (≈5.7e14)"
    );
}

#[test]
fn select_n_prints_the_chosen_n() {
    let out = run(&["select-n", "--rho", "1.0", "--m", "8", "--budget", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "8");

    let out = run(&["select-n", "--rho", "1.5", "--m", "8", "--budget", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn violation_reports_zero_for_a_valid_mask() {
    let dir = tempfile::tempdir().unwrap();
    let w = gaussian_matrix(16, 16, 0.0, 1.0, 4);
    let mask = nmsparse::builders::structured_mask(&w, &NmConfig::new(4, 8).unwrap()).unwrap();
    let mask_path = dir.path().join("mask.npy");
    nmsparse::io::save_mask(&mask_path, &mask).unwrap();

    let out = run(&[
        "violation",
        "--mask",
        mask_path.to_str().unwrap(),
        "--n",
        "4",
        "--m",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violating_blocks"], 0);
    assert_eq!(report["flipped_weights"], 0);
    assert_eq!(report["blocks"], 32);
}

#[test]
fn convert_reports_flips_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let w = gaussian_matrix(16, 16, 0.0, 1.0, 5);
    let src = nmsparse::builders::unstructured_mask(&w, 0.6).unwrap();
    let w_path = dir.path().join("w.npy");
    let src_path = dir.path().join("src.npy");
    let out_mask = dir.path().join("target.npy");
    let out_w = dir.path().join("w2.npy");
    save_matrix(&w_path, &w).unwrap();
    nmsparse::io::save_mask(&src_path, &src).unwrap();

    let out = run(&[
        "convert",
        "--in",
        w_path.to_str().unwrap(),
        "--mask",
        src_path.to_str().unwrap(),
        "--target",
        "4:8",
        "--transposable",
        "--bias-fix",
        "--out-mask",
        out_mask.to_str().unwrap(),
        "--out-w",
        out_w.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["target_n"], 4);
    assert!(report["output_mse"].is_null());

    let cfg = NmConfig::new(4, 8).unwrap();
    let mask = load_mask(&out_mask).unwrap();
    assert_eq!(count_violations(&mask, &cfg).unwrap(), (0, 0));
    // never un-prunes: the target kept-set sits inside the source's
    for (s, t) in src.bits().iter().zip(mask.bits()) {
        assert!(!(*s == 0 && *t == 1));
    }
    let w2 = nmsparse::io::load_matrix(&out_w).unwrap();
    for (v, b) in w2.data().iter().zip(mask.bits()) {
        if *b == 0 {
            assert_eq!(*v, 0.0);
        }
    }

    // adaprune without a calibration set is a data error
    let out = run(&[
        "convert",
        "--in",
        w_path.to_str().unwrap(),
        "--mask",
        src_path.to_str().unwrap(),
        "--target",
        "4:8",
        "--adaprune",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn adaprune_subcommand_reports_mse() {
    let dir = tempfile::tempdir().unwrap();
    let w = gaussian_matrix(8, 16, 0.0, 1.0, 6);
    let mask = nmsparse::builders::structured_mask(&w, &NmConfig::new(2, 4).unwrap()).unwrap();
    let x = gaussian_matrix(16, 64, 1.0, 1.0, 7);
    let w_path = dir.path().join("w.npy");
    let mask_path = dir.path().join("mask.npy");
    let x_path = dir.path().join("x.npy");
    let out_path = dir.path().join("refit.npy");
    save_matrix(&w_path, &w).unwrap();
    nmsparse::io::save_mask(&mask_path, &mask).unwrap();
    save_matrix(&x_path, &x).unwrap();

    let out = run(&[
        "adaprune",
        "--w",
        w_path.to_str().unwrap(),
        "--mask",
        mask_path.to_str().unwrap(),
        "--calib",
        x_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["output_mse"].as_f64().unwrap() >= 0.0);
    let refit = nmsparse::io::load_matrix(&out_path).unwrap();
    for (v, b) in refit.data().iter().zip(mask.bits()) {
        if *b == 0 {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn bench_emits_schema_and_ratio_stats() {
    let out = run(&["bench", "--m", "4,8", "--trials", "5"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries[0]["oracle_median_us"].is_number()); // m = 4
    assert!(entries[1]["oracle_median_us"].is_null()); // m = 8
    for e in entries {
        assert!(e["ratio"]["mean"].as_f64().unwrap() >= 1.0 - 1e-9);
        assert!(e["ratio"]["max"].as_f64().unwrap() < 2.0);
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["mask", "--help"]).status.code(), Some(0));
}
