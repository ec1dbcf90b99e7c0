//! End-to-end tests of the `ahst` binary: exit-code contract, file outputs,
//! and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ahst"));
    // keep the 2-core runner honest and deterministic
    cmd.env("AHST_THREADS", "2");
    cmd
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ahst_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

/// Small, fast geometry shared by most tests.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    write_config(
        dir,
        &format!(
            r#"{{
                "n_pixels": 128,
                "out_dir": "{}"{}
            }}"#,
            dir.display(),
            extra
        ),
    )
}

#[test]
fn simulate_eigenstate_writes_image() {
    let dir = tmp_dir("simulate");
    let config = small_config(
        &dir,
        r#", "state": {"dim": 13, "type": "eigen", "l": 7}"#,
    );
    let out = run(bin().args(["simulate", "--config"]).arg(&config));
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("image.pgm").exists());
    assert!(dir.join("image.meta.json").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("window capture fraction"));
    assert!(stdout.contains("total counts"));
}

#[test]
fn invalid_spec_exits_2_with_diagnostic() {
    let dir = tmp_dir("badspec");
    let config = small_config(&dir, r#", "state": {"dim": 13, "type": "eigen", "l": 7, "oops": 1}"#);
    let out = run(bin().args(["simulate", "--config"]).arg(&config));
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // unparseable config file
    let bad = dir.join("broken.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(bin().args(["simulate", "--config"]).arg(&bad));
    assert_eq!(out.status.code(), Some(2));

    // unknown config key
    let config = write_config(&dir, r#"{"n_pixels": 128, "bogus_knob": 3}"#);
    let out = run(bin().args(["simulate", "--config"]).arg(&config));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_reconstruct_round_trip_reports_high_fidelity() {
    // |7⟩⟨7| with the mode space matched to the state and a cutoff sized for
    // 16-bit file data (the e^{+2R²} weight amplifies the quantization floor
    // of wider cutoffs into junk on the top matrix elements).
    let dir = tmp_dir("roundtrip");
    let config = write_config(
        &dir,
        &format!(
            r#"{{
                "out_dir": "{}",
                "l_max": 7,
                "r_cut": 23.0,
                "state": {{"dim": 8, "type": "eigen", "l": 7}}
            }}"#,
            dir.display()
        ),
    );
    let out = run(bin().args(["simulate", "--config"]).arg(&config));
    assert!(out.status.success());
    let out = run(bin()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .arg(dir.join("image.pgm")));
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["raw.json", "physical.json", "report.json"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let fidelity = report["fidelity_vs_target"].as_f64().unwrap();
    assert!(fidelity >= 0.99, "round-trip fidelity {fidelity}");
    assert!(report["r_cut_used"].as_f64().unwrap() > 0.0);
}

#[test]
fn gouy_rotation_round_trips() {
    let dir = tmp_dir("gouy");
    let config = small_config(
        &dir,
        r#", "gouy_rotate_90": true, "l_max": 3, "state": {"dim": 4, "type": "eigen", "l": 3}"#,
    );
    assert!(run(bin().args(["simulate", "--config"]).arg(&config)).status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("image.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["gouy_rotate_90"], serde_json::Value::Bool(true));
    let out = run(bin()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .arg(dir.join("image.pgm")));
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["fidelity_vs_target"].as_f64().unwrap() >= 0.99);
}

#[test]
fn geometry_mismatch_exits_3() {
    let dir = tmp_dir("geomismatch");
    let config = small_config(&dir, r#", "state": {"dim": 13, "type": "eigen", "l": 0}"#);
    assert!(run(bin().args(["simulate", "--config"]).arg(&config)).status.success());
    // reconstruct with a different grid
    let other = write_config(
        &dir.join(""),
        &format!(r#"{{"n_pixels": 256, "out_dir": "{}"}}"#, dir.display()),
    );
    let out = run(bin()
        .args(["reconstruct", "--config"])
        .arg(&other)
        .arg(dir.join("image.pgm")));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn black_image_exits_4() {
    let dir = tmp_dir("black");
    // craft an all-zero image through the library
    let g = ahst_core::modes::BeamGeometry::with_window(0.114f64, 128, 12.0).unwrap();
    let img = ahst_core::imaging::IntensityImage::new(g, vec![0.0; 128 * 128]).unwrap();
    ahst_core::imaging::write_image(&img, &dir.join("black.pgm"), false).unwrap();
    let config = small_config(&dir, "");
    let out = run(bin()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .arg(dir.join("black.pgm")));
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn table1_noiseless_rows_and_determinism() {
    let dir = tmp_dir("table1");
    let config = small_config(&dir, r#", "repetitions": 2"#);
    let out = run(bin().args(["table1", "--config"]).arg(&config).args(["--seed", "5"]));
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.join("table1.csv")).unwrap();
    let text = String::from_utf8_lossy(&first).to_string();
    assert_eq!(text.lines().count(), 19, "header + 18 states");
    // noiseless run: every fidelity ≥ 0.99
    for line in text.lines().skip(1) {
        let mean: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(mean >= 0.99, "line {line}");
    }
    // byte-identical re-run
    let out = run(bin().args(["table1", "--config"]).arg(&config).args(["--seed", "5"]));
    assert!(out.status.success());
    let second = std::fs::read(dir.join("table1.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn table1_rejects_undersized_mode_space() {
    let dir = tmp_dir("table1small");
    let config = small_config(&dir, r#", "l_max": 6"#);
    let out = run(bin().args(["table1", "--config"]).arg(&config));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs dim >= 13"));
}

#[test]
fn wigner_export_from_reconstruction() {
    let dir = tmp_dir("wigner");
    let config = small_config(
        &dir,
        r#", "state": {"dim": 13, "type": "mixture", "components": [
            {"weight": 0.5, "state": {"type": "eigen", "l": 0}},
            {"weight": 0.5, "state": {"type": "eigen", "l": 12}}
        ]}"#,
    );
    assert!(run(bin().args(["simulate", "--config"]).arg(&config)).status.success());
    assert!(run(bin()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .arg(dir.join("image.pgm")))
    .status
    .success());
    let out = run(bin()
        .args(["wigner", "--config"])
        .arg(&config)
        .arg(dir.join("physical.json")));
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("wigner.csv").exists());
    let ppm = std::fs::read(dir.join("wigner.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n201 201\n255\n"));
    assert!(dir.join("wigner.meta.json").exists());
    // mixture of |0> and |12>: no deep negativity anywhere near the lobes
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("W range"));
}

#[test]
fn orthocheck_reports_small_deviation() {
    let dir = tmp_dir("orthocheck");
    let config = small_config(&dir, r#", "l_max": 6"#);
    let out = run(bin().args(["orthocheck", "--config"]).arg(&config));
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("orthocheck.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 49);
    for line in text.lines().skip(1) {
        let dev: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(dev <= 1e-3, "line {line}");
    }
}

#[test]
fn calibrate_recovers_sigma_and_rejects_rings() {
    let dir = tmp_dir("calibrate");
    let config = small_config(&dir, r#", "state": {"dim": 13, "type": "eigen", "l": 0}"#);
    assert!(run(bin().args(["simulate", "--config"]).arg(&config)).status.success());
    let out = run(bin().args(["calibrate", "--config"]).arg(&config).arg(dir.join("image.pgm")));
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("calibrate.json")).unwrap())
            .unwrap();
    let sigma = doc["sigma_mm"].as_f64().unwrap();
    assert!((sigma - 0.114).abs() <= 1e-4, "sigma {sigma}");

    // ring image: quality-flagged error, exit 4
    let ring = small_config(&dir, r#", "state": {"dim": 13, "type": "eigen", "l": 7}"#);
    assert!(run(bin().args(["simulate", "--config"]).arg(&ring)).status.success());
    let out = run(bin().args(["calibrate", "--config"]).arg(&ring).arg(dir.join("image.pgm")));
    assert_eq!(out.status.code(), Some(4));
}
