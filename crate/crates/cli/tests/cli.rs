use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn marbubble(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marbubble"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SIM: [&str; 16] = [
    "simulate",
    "--r",
    "1",
    "--s",
    "1",
    "--phi",
    "0.3",
    "--psi",
    "0.9",
    "--dist",
    "t3",
    "--T",
    "400",
    "--seed",
    "7",
    "--burn=200",
];

#[test]
fn simulate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(marbubble(&SIM, &a).status.success());
    assert!(marbubble(&SIM, &b).status.success());
    let ca = fs::read(a.join("simulated.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("simulated.csv")).unwrap());
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 401);

    let m = json(&a.join("simulate.manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seeds"][0], 7);
    assert_eq!(m["config"]["args"]["model"]["psi"], 0.9);
    let digest = m["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let mut other = SIM;
    other[14] = "8";
    marbubble(&SIM, &dir.path().join("a"));
    marbubble(&other, &dir.path().join("b"));
    assert_ne!(
        fs::read(dir.path().join("a/simulated.csv")).unwrap(),
        fs::read(dir.path().join("b/simulated.csv")).unwrap()
    );
}

#[test]
fn nonstationary_psi_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = marbubble(&["simulate", "--psi", "1.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stationarity"));
}

#[test]
fn usage_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = marbubble(&["simulate", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let o = marbubble(&["estimate", "--input", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_recovers_simulated_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = SIM;
    sim[10] = "cauchy";
    assert!(marbubble(&sim, dir.path()).status.success());
    let input = dir.path().join("simulated.csv");
    let o = marbubble(&["estimate", "--input", input.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let r = json(&dir.path().join("estimate.json"));
    assert_eq!(r["manifest"], "estimate.manifest.json");
    let th = r["theta"].as_array().unwrap();
    assert!((th[0].as_f64().unwrap() - 0.3).abs() < 0.05);
    assert!((th[1].as_f64().unwrap() - 0.9).abs() < 0.05);
    let m = json(&dir.path().join("estimate.manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn duration_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = marbubble(
        &["duration", "--phi", "0.24", "--psi", "0.70", "--alpha", "1.3"],
        dir.path(),
    );
    assert!(o.status.success());
    let r = json(&dir.path().join("duration.json"));
    let e = r["report"]["E_N"].as_f64().unwrap();
    assert!((e + 1.509).abs() < 0.005, "E(N) = {e}");
    let p3 = r["report"]["exceed_probs"]["3"].as_f64().unwrap();
    assert!((p3 - 0.2327).abs() < 0.001, "P[N ≤ −3] = {p3}");

    let o = marbubble(
        &["duration", "--phi", "0.5", "--psi", "0.5", "--alpha", "2"],
        dir.path(),
    );
    assert!(o.status.success());
    let r = json(&dir.path().join("duration.json"));
    assert!(r["report"]["E_N"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn duration_bad_alpha_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = marbubble(&["duration", "--psi", "0.7", "--alpha", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = marbubble(&["duration", "--psi", "0.7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constant_input_gives_no_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    let mut text = String::from("date,value\n");
    for y in 2001..2006 {
        for m in 1..=12 {
            text += &format!("{y}-{m:02}-01,5.0\n");
        }
    }
    fs::write(&input, text).unwrap();
    let o = marbubble(&["detect", "--input", input.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("detection.json"));
    assert_eq!(r["episodes"].as_array().unwrap().len(), 0);
    assert_eq!(r["threshold_q"], 0.975);
}

#[test]
fn detect_writes_plot_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = SIM;
    sim[10] = "cauchy";
    marbubble(&sim, dir.path());
    let input = dir.path().join("simulated.csv");
    let o = marbubble(&["detect", "--input", input.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("detection_points.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("date,y,xi,band_lo,band_hi,in_episode"));
    assert_eq!(lines.count(), 400);
    let m = json(&dir.path().join("detect.manifest.json"));
    let outs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert!(outs.iter().any(|p| p.ends_with("detection_points.csv")));
}

#[test]
fn moments_report_has_constant_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = marbubble(
        &[
            "moments", "--phi", "0.3", "--psi", "0.5", "--y-t", "0", "--y-tm1", "0", "--sigma", "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let r = json(&dir.path().join("moments.json"));
    assert!((r["printed"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    let o = marbubble(
        &["moments", "--phi", "0.3", "--psi", "0", "--y-t", "1", "--y-tm1", "0"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn mc_smoke_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["mc", "--R", "1", "--psi", "0.5,0.9", "--dists", "t3", "--seed", "3"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(marbubble(&args, &a).status.success());
    assert!(marbubble(&args, &b).status.success());
    for f in ["mc_size.csv", "mc_power.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let size = fs::read_to_string(a.join("mc_size.csv")).unwrap();
    assert_eq!(size.lines().next(), Some("dist,psi,phi,metric,value,R,failures"));
    assert_eq!(size.lines().count(), 3);
}

#[test]
fn stats_and_detrend_json_format() {
    let dir = tempfile::tempdir().unwrap();
    marbubble(&SIM, dir.path());
    let input = dir.path().join("simulated.csv");
    let o = marbubble(
        &["stats", "--input", input.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success());
    let s = json(&dir.path().join("stats.json"));
    assert_eq!(s["summary"]["n"], 400);
    let rv = json(&dir.path().join("rolling_variance.json"));
    assert_eq!(rv["values"].as_array().unwrap().len(), 396);
    let o = marbubble(
        &["detrend", "--input", input.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success());
    let d = json(&dir.path().join("detrended.json"));
    assert_eq!(d["residual"].as_array().unwrap().len(), 400);
}
