//! End-to-end checks of the command-line interface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nls-lab"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_small_config(dir: &std::path::Path) -> PathBuf {
    let text = r#"
name = "cli_smoke"
[problem]
dimension = 1
p = 3.0
potential = "inverse_poly4"
decay_class = "quadratic_slow"
[problem.region]
kind = "level_set"
threshold = 0.8
anchor = [0.0]
rho = 0.15
beta_pen = 1.0
mu = 0.4
penalization = "low_dim"
[mesh]
half_width = 6.0
points_per_axis = 1201
[sweep]
epsilons = [0.2, 0.1]
mode = "pinned"
pin_target = [0.0]
[tolerances]
tol_grad = 1e-6
max_iter = 20000
[output]
directory = "unused"
"#;
    let path = dir.join("cli_smoke.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn limit_emits_calibration_json() {
    let out = bin()
        .args(["limit", "--dim", "1", "--p", "3", "--nu", "1"])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let u0 = value["u0"].as_f64().unwrap();
    assert!((u0 - std::f64::consts::SQRT_2).abs() < 1e-9);
    assert!((value["b_nu"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn validate_passes_on_bundled_configs() {
    for name in ["inverse_poly4_1d.toml", "gaussian_bump_2d.toml", "inverse_poly4_3d_radial.toml"]
    {
        let out = bin()
            .args(["validate", "--config"])
            .arg(config(name))
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn sweep_solve_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let out_dir = dir.path().join("out");

    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--dump-fields", "--out"])
        .arg(&out_dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("cli_smoke_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header plus one row per eps");
    assert!(out_dir.join("cli_smoke_summary.json").exists());

    // verify the dumped fields in a fresh directory
    let verify_dir = dir.path().join("verified");
    let out = bin()
        .args(["verify", "--input"])
        .arg(&out_dir)
        .arg("--out")
        .arg(&verify_dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "verify failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(verify_dir.join("cli_smoke_report.csv").exists());
    assert!(verify_dir.join("cli_smoke_decay_profile.dat").exists());

    // the verified report reproduces the sweep energies
    let reverified = std::fs::read_to_string(verify_dir.join("cli_smoke_report.csv")).unwrap();
    let energy = |text: &str| -> Vec<f64> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .collect()
    };
    for (a, b) in energy(&csv).iter().zip(energy(&reverified)) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn solve_emits_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--eps", "0.2", "--mode", "symmetric"])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["record"]["converged"], serde_json::json!(true));
    assert!(value["record"]["certificate_holds"].as_bool().unwrap());
}

#[test]
fn bad_configs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[problem]\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
}
