use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mandet::harness::{first_at_or_after, initial_estimate, read_ephemeris_csv, DetectionReport, StateRecord};
use mandet::radar::read_track_csv;
use mandet::Config;

const CONFIG: &str = "seed = 11\n[harness]\nspan_days = 2.0\n[alg1]\nparticles = 200\n[alg2]\nsamples = 200\nreplicates = 20\n";

fn mandet(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mandet")).current_dir(dir).args(["--config", "cfg.toml"]).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn simulate_fit_and_detect_one_segment() {
    let dir = workspace();
    let d = dir.path();
    mandet(d, &["--out", "sim", "simulate"]);
    let tracks: Vec<_> = fs::read_dir(d.join("sim/tracks")).unwrap().collect();
    assert!(tracks.len() >= 2);
    mandet(d, &["--out", "fit", "fit", "--track", "sim/tracks/track_001.csv"]);
    let att: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit/track_001.attributable.json")).unwrap()).unwrap();
    assert_eq!(att["cov_rowmajor_4x4"].as_array().unwrap().len(), 16);

    // segment start from the truth ephemeris just after track 0
    let cfg = Config::load(&d.join("cfg.toml")).unwrap();
    let eph = read_ephemeris_csv(&d.join("sim/truth.csv")).unwrap();
    let t0 = read_track_csv(&d.join("sim/tracks/track_000.csv"), "station").unwrap();
    let x = first_at_or_after(&eph, t0.last_epoch()).unwrap();
    let est = initial_estimate(x, &cfg.harness.detector_covariance_lvlh(), false, 0).unwrap();
    fs::write(d.join("state.json"), serde_json::to_string(&StateRecord::from(&est)).unwrap()).unwrap();

    let one = ["--state", "state.json", "--track", "sim/tracks/track_001.csv", "--segment-id", "3"];
    mandet(d, &[&["--out", "det", "detect-alg1"][..], &one].concat());
    mandet(d, &[&["--out", "det", "detect-alg2"][..], &one].concat());
    let text = fs::read_to_string(d.join("det/report.jsonl")).unwrap();
    let report = DetectionReport::from_jsonl(&text).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().all(|r| r.segment_id == 3 && !r.truth_label && r.error.is_none()));
    assert!(report.rows[0].alg1_md.is_some() && report.rows[0].p1m.is_none());
    assert!(report.rows[1].j_median.is_some() && report.rows[1].alg2_decision.is_some());
    let json: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    for key in ["segment_id", "J_median", "P1M", "P5M", "P8M", "P1D", "P5D", "P8D", "truth_label"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(d.join("det/track_001.cdf.csv").exists());

    mandet(d, &["--out", "tables", "report", "--input", "det/report.jsonl", "--format", "markdown"]);
    assert!(d.join("tables/summary.md").exists());
    assert!(!d.join("tables/summary.csv").exists());
}

#[test]
fn filter_logs_from_scenario_and_recorded_tracks() {
    let dir = workspace();
    let d = dir.path();
    mandet(d, &["--out", "sim", "simulate"]);
    mandet(d, &["--out", "a", "ukf", "--spec", "sim/spec.json"]);
    mandet(d, &["--out", "b", "mdf", "--tracks", "sim/tracks", "--ephemeris", "sim/truth.csv"]);
    let a = fs::read_to_string(d.join("a/ukf_log.csv")).unwrap();
    let b = fs::read_to_string(d.join("b/mdf_log.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    // truth errors only when a scenario is simulated
    assert!(!a.lines().nth(1).unwrap().split(',').nth(1).unwrap().is_empty());
    assert!(b.lines().nth(1).unwrap().split(',').nth(1).unwrap().is_empty());
}

#[test]
fn campaign_is_reproducible() {
    let dir = workspace();
    let d = dir.path();
    mandet(d, &["--out", "sim", "simulate"]);
    fs::create_dir(d.join("specs")).unwrap();
    fs::copy(d.join("sim/spec.json"), d.join("specs/a.json")).unwrap();
    let run = |out: &str| {
        mandet(d, &["--out", out, "campaign", "--specs", "specs", "--detectors", "ukf,mdf"]);
        fs::read(d.join(out).join("report.jsonl")).unwrap()
    };
    let first = run("c1");
    assert!(!first.is_empty());
    assert_eq!(first, run("c2"));
    for f in ["segments.csv", "summary.csv", "summary.md"] {
        assert!(d.join("c1").join(f).exists(), "{f}");
    }
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = workspace();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_mandet")).current_dir(d).args(["--config", "cfg.toml", "fit", "--track", "missing.csv"]).output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let out = Command::new(env!("CARGO_BIN_EXE_mandet")).current_dir(d).args(["ukf", "--tracks", "x"]).output().unwrap();
    assert!(!out.status.success());
}
