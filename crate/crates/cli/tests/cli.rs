//! End-to-end runs of the `tracelens` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tracelens"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tracelens")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn ingest_stats_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let trips = fixture("trips_100.csv");
    let o = run(&["ingest-stats", "--trips", s(&trips), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let got = std::fs::read(out.join("trip_stats.csv")).unwrap();
    let want = std::fs::read(fixture("trip_stats.golden.csv")).unwrap();
    assert!(got == want, "trip_stats.csv differs from the golden file");

    let report = read_json(&out.join("ingest_report.json"));
    assert_eq!(report["trips_kept"], 100);
    assert_eq!(report["trips_rejected"], 3);

    let m = read_json(&out.join("ingest-stats.manifest.json"));
    let digest = format!("{:x}", Sha256::digest(std::fs::read(&trips).unwrap()));
    assert_eq!(m["inputs"][0]["sha256"], digest.as_str());
    assert_eq!(m["subcommand"], "ingest-stats");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);

    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("level=info cmd=ingest-stats event=start"));
    assert!(stderr.contains("event=done"));
}

#[test]
fn missing_input_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "match",
        "--trips",
        s(&fixture("trips_100.csv")),
        "--network",
        s(&dir.path().join("absent.geojson")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind=config"));
}

#[test]
fn empty_corpus_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let trips = dir.path().join("t.csv");
    std::fs::write(&trips, "trip_id,device_id,mode,weight_class,provider,lat,lon,t_ms\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["ingest-stats", "--trips", s(&trips), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn bad_flags_and_unknown_config_keys_exit_2() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[ingest]\nvmaxx = 3.0\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "ingest-stats"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_and_paths_resolve_against_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("trips_100.csv"), dir.path().join("trips.csv")).unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[output]\ndir = \"res\"\n[ingest]\ntrips = \"trips.csv\"\nvmax_mps = 0.5\n").unwrap();

    let o = bin().current_dir("/").args(["--config", s(&cfg), "ingest-stats", "--vmax", "500"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&dir.path().join("res/ingest-stats.manifest.json"));
    assert_eq!(m["config"]["ingest"]["vmax_mps"], 500.0);

    let other = dir.path().join("other");
    let o = run(&["--config", s(&cfg), "--out", s(&other), "ingest-stats"]);
    assert!(o.status.success());
    let m = read_json(&other.join("ingest-stats.manifest.json"));
    assert_eq!(m["config"]["ingest"]["vmax_mps"], 0.5);
    // A tighter speed limit drops waypoints the lenient one kept.
    let strict = read_json(&other.join("ingest_report.json"));
    let lenient = read_json(&dir.path().join("res/ingest_report.json"));
    assert!(strict["waypoints_dropped_as_outliers"].as_u64() > lenient["waypoints_dropped_as_outliers"].as_u64());
}

#[test]
fn refuses_to_overwrite_an_input() {
    let dir = tempfile::tempdir().unwrap();
    let trips = dir.path().join("trip_stats.csv");
    std::fs::copy(fixture("trips_100.csv"), &trips).unwrap();
    let o = run(&["ingest-stats", "--trips", s(&trips), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read(&trips).unwrap(), std::fs::read(fixture("trips_100.csv")).unwrap());
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| e.file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".manifest.json"))
        .map(|n| {
            let b = std::fs::read(dir.join(&n)).unwrap();
            (n, b)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "42"), (&b, "42"), (&c, "43")] {
        let o = run(&["synth", "--seed", seed, "--out", s(d)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = tree(&a);
    assert!(ta.len() >= 15);
    assert!(ta == tree(&b));
    assert!(ta != tree(&c));
    assert!(a.join("synth.manifest.json").exists());
}
