// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cgolab");
const ROOT: &str = env!("CARGO_MANIFEST_DIR");

const SMOOTH: &str = r#"
k = [0.0, 0.0, 1.0]
bands = [8.0, 16.0]
samples = 4

[grid]
n = 16

[[conductivity]]
profile = "gaussian"
amplitude = 0.05
width = 0.3

[estimates]
fields = 4
trials = 2
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("CGOLAB_OUT")
        .output()
        .unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn recover_matches_regression_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(ROOT).join("configs/recover_baseline.toml");
    let out = run(&["recover", "--format", "csv"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let got = data_rows(&std::fs::read_to_string(tmp.path().join("recover.csv")).unwrap());
    let want = data_rows(&std::fs::read_to_string(Path::new(ROOT).join("tests/data/recover_n32.csv")).unwrap());
    assert_eq!(got.len(), want.len());
    assert_eq!(got[0], want[0]);
    for (g, w) in got.iter().zip(&want).skip(1) {
        assert_eq!(g[0], w[0], "k column");
        for (a, b) in g.iter().zip(w).skip(1) {
            let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-6), "{a} vs {b} in {g:?}");
        }
    }
}

#[test]
fn identical_config_and_seed_reproduce_csv_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMOOTH);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&["select-zeta", "--seed", "5", "--threads", threads], &config, dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("select-zeta.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tmp.path().join("c");
    run(&["select-zeta", "--seed", "6"], &config, &c);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn outputs_carry_hash_versions_and_wall_time() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMOOTH);
    let out = run(&["averaged-decay"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("averaged-decay.json")).unwrap()).unwrap();
    let hash = json["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(json["versions"]["cgolab"].is_string());
    assert!(json["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["diagnostics"]["report"]["bands"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(tmp.path().join("averaged-decay.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(&format!("config_hash={hash}")));
}

#[test]
fn constant_conductivity_gives_zero_psi() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMOOTH.replace(
        "profile = \"gaussian\"\namplitude = 0.05\nwidth = 0.3",
        "profile = \"constant\"\nvalue = 1.0",
    );
    let config = write_config(tmp.path(), &text);
    let out = run(&["solve-cgo", "--format", "json"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("solve-cgo.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("solve-cgo.json")).unwrap()).unwrap();
    for solve in json["diagnostics"]["solves"].as_array().unwrap() {
        assert_eq!(solve["report"]["psi_norm_xdot"].as_f64(), Some(0.0));
        assert_eq!(solve["report"]["converged"].as_bool(), Some(true));
    }
}

#[test]
fn infeasible_band_exits_three_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &SMOOTH.replace("bands = [8.0, 16.0]", "bands = [0.5, 16.0]"));
    let out_dir = tmp.path().join("out");
    let out = run(&["verify-estimates"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.exists());
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &SMOOTH.replace("samples = 4", "samples = 4\nsample_count = 2"));
    let out_dir = tmp.path().join("out");
    let out = run(&["select-zeta"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sample_count") && err.contains("line"), "{err}");
    assert!(!out_dir.exists());

    let config = write_config(tmp.path(), &SMOOTH.replace("k = [0.0, 0.0, 1.0]\n", ""));
    let out = run(&["averaged-decay"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k: required"));
}

#[test]
fn divergence_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMOOTH
        .replace("bands = [8.0, 16.0]", "bands = [0.6]")
        .replace("amplitude = 0.05\nwidth = 0.3", "amplitude = 100.0\nwidth = 0.25");
    let config = write_config(tmp.path(), &text);
    let out = run(&["solve-cgo"], &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let config = write_config(tmp.path(), &format!("{SMOOTH}\n[solver]\nmax_iter = 1\n"));
    let out = run(&["solve-cgo"], &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(4));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn singular_mass_without_clamp_exits_five() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &SMOOTH.replace("samples = 4", "samples = 4\nclamp_eps = 0.0"));
    let out = run(&["solve-cgo"], &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn environment_overrides_output_dir_only() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMOOTH);
    let env_dir = tmp.path().join("from_env");
    let out = Command::new(BIN)
        .args(["singbound", "--config"])
        .arg(&config)
        .env("CGOLAB_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("singbound.csv").exists());
}

#[test]
fn two_profile_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let second = "\n[[conductivity]]\nprofile = \"gaussian\"\namplitude = 0.08\nwidth = 0.3\n";
    let text = SMOOTH.replace("[estimates]", &format!("{second}\n[estimates]")).replace("k = [0.0, 0.0, 1.0]\n", "k_count = 2\n");
    let config = write_config(tmp.path(), &text);
    let out = run(&["uniqueness-gap"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&std::fs::read_to_string(tmp.path().join("uniqueness-gap.csv")).unwrap());
    assert_eq!(rows.len(), 1 + 2 * 2);
    for row in &rows[1..] {
        let gap: f64 = row[6].parse().unwrap();
        assert!(gap > 0.0);
    }

    let config = write_config(tmp.path(), SMOOTH);
    let out = run(&["uniqueness-gap"], &config, &tmp.path().join("x"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_estimates_reports_every_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMOOTH);
    let out = run(&["verify-estimates", "--format", "csv"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&std::fs::read_to_string(tmp.path().join("verify-estimates.csv")).unwrap());
    let names: std::collections::BTreeSet<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    for id in ["loc_2_1", "loc_2_2", "loc_2_3", "loc_2_4", "loc_2_5", "bilinear_2_3", "mq_theta"] {
        assert!(names.contains(id), "{id} missing");
    }
    for row in &rows[1..] {
        let ratio: f64 = row[3].parse().unwrap();
        assert!(ratio.is_finite() && ratio >= 0.0);
    }
}
