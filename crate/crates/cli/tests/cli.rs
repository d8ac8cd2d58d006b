use std::path::Path;
use std::process::Command;

use cvqkd_cli::{fmt_num, run, EXIT_CONFIG, EXIT_FAIL, EXIT_OK};
use cvqkd_core::protocol::secret_key_rate;
use cvqkd_core::{ChannelParams, ModifiedDetector, ProtocolParams};
use sha2::{Digest, Sha256};

fn run_lib(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cvqkd").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
        .parse()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(|r| r.unwrap()).collect()
}

#[test]
fn keyrate_matches_library_call() {
    let (code, out, _) = run_lib(&["keyrate", "--distance-km", "30", "--gain", "3"]);
    assert_eq!(code, EXIT_OK);
    let b = secret_key_rate(
        &ChannelParams::from_length(30.0, 0.2, 0.01).unwrap(),
        &ModifiedDetector::new(0.6, 0.9).unwrap(),
        &ProtocolParams::new(40.0, 0.956, 3.0).unwrap(),
    )
    .unwrap();
    let mut want = format!("R={} I_AB={} chi_BE={}", fmt_num(b.key_rate), fmt_num(b.i_ab), fmt_num(b.chi_be));
    for (i, l) in b.lambdas.iter().enumerate() {
        want += &format!(" lambda{}={}", i + 1, fmt_num(*l));
    }
    assert_eq!(out, want + "\n");

    let bin = Command::new(env!("CARGO_BIN_EXE_cvqkd"))
        .args(["keyrate", "--distance-km", "30", "--gain", "3"])
        .output()
        .unwrap();
    assert!(bin.status.success());
    assert_eq!(String::from_utf8(bin.stdout).unwrap(), out);
}

#[test]
fn zero_beta_reports_negative_holevo() {
    let (code, out, _) = run_lib(&["keyrate", "--beta", "0"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(field(&out, "R"), -field(&out, "chi_BE"));
    assert!(field(&out, "R") < 0.0);
}

#[test]
fn clamp_only_changes_presentation() {
    let (_, raw, _) = run_lib(&["keyrate", "--distance-km", "100"]);
    let (_, clamped, _) = run_lib(&["keyrate", "--distance-km", "100", "--clamp"]);
    assert!(field(&raw, "R") < 0.0);
    assert_eq!(field(&clamped, "R"), 0.0);
    assert_eq!(field(&raw, "chi_BE"), field(&clamped, "chi_BE"));
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.csv");
    let out_s = out.to_str().unwrap();
    for text in [
        "[channel\nexcess_noise = 0.01\n",
        "[channel]\nexcess_noize = 0.01\n",
        "[detector]\neta_d = 1.7\n",
        "[sweep]\ndistance_step_km = -1.0\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let (code, _, err) = run_lib(&["sweep-distance", "--config", &cfg, "--out", out_s]);
        assert_eq!(code, EXIT_CONFIG, "{text}");
        assert!(!err.is_empty());
        assert!(!out.exists(), "{text}");
    }
    let (code, _, _) = run_lib(&["keyrate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = run_lib(&["keyrate", "--eta-d", "zero"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn config_errors_are_listed_per_field() {
    let (code, _, err) = run_lib(&["keyrate", "--eta-d", "0", "--beta", "1.5", "--epr-variance", "0.5"]);
    assert_eq!(code, EXIT_CONFIG);
    for key in ["detector", "protocol"] {
        assert!(err.lines().any(|l| l.trim_start().starts_with(key)), "{err}");
    }
    assert!(err.lines().count() >= 4, "{err}");
}

#[test]
fn distance_sweep_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let (code, _, _) = run_lib(&["sweep-distance", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let first = std::fs::read(&out).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "axis,series_label,key_rate_bits_per_pulse,i_ab,chi_be,status,reason"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4 * 101);
    for label in ["ideal", "g=1", "g=3", "g=10"] {
        assert_eq!(rows.iter().filter(|r| &r[1] == label).count(), 101);
    }
    assert!(rows.iter().all(|r| &r[5] == "ok"));
    assert!(!text.contains(' '));

    run_lib(&["sweep-distance", "--out", out.to_str().unwrap()]);
    let second = std::fs::read(&out).unwrap();
    assert_eq!(Sha256::digest(&first), Sha256::digest(&second));
}

#[test]
fn failed_points_keep_their_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\ndistance_start_km = -2.0\ndistance_stop_km = 2.0\ngains = [1.0]\ninclude_ideal = false\n",
    );
    let (code, out, _) = run_lib(&["sweep-distance", "--config", &cfg]);
    assert_eq!(code, EXIT_OK);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 5);
    for r in &rows[..2] {
        assert_eq!(&r[5], "failed");
        assert!(r[2].is_empty() && r[3].is_empty() && r[4].is_empty());
        assert!(!r[6].is_empty());
    }
    for r in &rows[2..] {
        assert_eq!(&r[5], "ok");
        assert!(r[6].is_empty());
    }
}

#[test]
fn variance_sweep_covers_every_series() {
    let (code, out, _) = run_lib(&["sweep-variance"]);
    assert_eq!(code, EXIT_OK);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 200 * 3 * 4);
    assert!(rows.iter().any(|r| &r[1] == "L=50km g=10"));
    let (_, clamped, _) = run_lib(&["sweep-variance", "--clamp"]);
    assert!(csv_rows(&clamped).iter().all(|r| r[2].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("sweep.csv");
    let (code, _, err) = run_lib(&["sweep-distance", "--out", out.to_str().unwrap()]);
    assert_ne!(code, EXIT_OK);
    assert!(err.contains("cannot write"));
}

#[test]
fn max_noise_records_missing_roots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\ndistance_start_km = 10.0\ndistance_stop_km = 70.0\ndistance_step_km = 30.0\ngains = [1.0, 10.0]\n",
    );
    let (code, out, _) = run_lib(&["max-noise", "--config", &cfg]);
    assert_eq!(code, EXIT_OK);
    let header = out.lines().next().unwrap();
    assert!(header.contains("iterations") && header.contains("residual"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 9);
    let at = |label: &str, l: &str| rows.iter().find(|r| &r[1] == label && &r[0] == l).unwrap().clone();
    let r = at("g=1", &fmt_num(10.0));
    assert_eq!(&r[8], "ok");
    let root: f64 = r[2].parse().unwrap();
    assert!(root > 0.0 && root < 0.3);
    assert!(r[6].parse::<f64>().unwrap().abs() <= 1e-8 || &r[7] == "grid_scan");
    let r = at("g=1", &fmt_num(70.0));
    assert_eq!(&r[8], "failed");
    assert!(r[2].is_empty() && !r[9].is_empty());
}

#[test]
fn mc_verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mc]\nn_samples = 200000\n");
    let (code, out, _) = run_lib(&["mc-verify", "--config", &cfg, "--seed", "3"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.ends_with("result=PASS\n"));
    assert!(out.contains("seed=3\n"));

    let strict = write_config(dir.path(), "[mc]\nn_samples = 200000\nz_threshold = 1e-6\n");
    let (code, out, _) = run_lib(&["mc-verify", "--config", &strict]);
    assert_eq!(code, EXIT_FAIL);
    assert!(out.ends_with("result=FAIL\n"));

    let tiny = write_config(dir.path(), "[mc]\nn_samples = 10\n");
    let (code, _, _) = run_lib(&["mc-verify", "--config", &tiny]);
    assert_eq!(code, EXIT_CONFIG);
}
