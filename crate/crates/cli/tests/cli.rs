use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const TINY: &str = r#"
seed = 11
horizon_minutes = 120.0

[fleet]
size = 5

[chargers]
count = 2
posts = 2

[matching]
kind = "power_of_d"
d = 1.5

[dataset]
kind = "synthetic"
rate_per_minute = 0.8
region = { lat_min = 40.74, lat_max = 40.76, lon_min = -73.99, lon_max = -73.97 }
"#;

fn evfleet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evfleet"))
        .args(args)
        .env_remove("EVFLEET_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_every_artifact_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let started = Instant::now();
    let o = evfleet(&["run", s(&cfg), "--out", s(&out), "--assert"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(started.elapsed() < Duration::from_secs(1));
    for f in ["summary.json", "timeseries.csv", "pickup_hist.csv", "events.csv", "chargers.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["fleet_size"], 5);
    let header = std::fs::read_to_string(out.join("events.csv")).unwrap();
    assert!(header.starts_with("time,event,vehicle,trip,station,from,to,a,b,c"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(evfleet(&["run", s(&cfg), "--out", s(&a)]).status.success());
    assert!(evfleet(&["run", s(&cfg), "--out", s(&b)]).status.success());
    for f in ["events.csv", "summary.json", "timeseries.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = dir.path().join("c");
    assert!(evfleet(&["run", s(&cfg), "--out", s(&c), "--seed", "12"]).status.success());
    assert_ne!(std::fs::read(a.join("events.csv")).unwrap(), std::fs::read(c.join("events.csv")).unwrap());
}

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let o = evfleet(&["validate", s(&cfg)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("velocity_mph"));
    assert!(text.contains("alpha"));
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &TINY.replace("size = 5", "size = 0"));
    let o = evfleet(&["run", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = evfleet(&["validate", s(&dir.path().join("missing.toml"))]);
    assert!(!o.status.success());
}

#[test]
fn generated_trips_fit_back_to_their_factor() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "gen.toml",
        r#"
seed = 3
horizon_minutes = 600.0
start_minute_of_day = 480.0
correction_factor = 1.3
date = "2024-05-01"
rate_per_minute = 2.0
region = { lat_min = 40.70, lat_max = 40.80, lon_min = -74.02, lon_max = -73.92 }
"#,
    );
    let csv = dir.path().join("trips.csv");
    let o = evfleet(&["gen", s(&spec), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = evfleet(&["fit", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let slope = v["regression"]["slope"].as_f64().unwrap();
    assert!((slope - 1.3).abs() < 1e-6, "slope {slope}");
}

#[test]
fn sweep_prints_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let o = evfleet(&["sweep", s(&cfg), "--seeds", "3", "--threads", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("seed,arrivals"));
    assert!(lines[1].starts_with("11,"));
    assert!(lines[3].starts_with("13,"));
}
