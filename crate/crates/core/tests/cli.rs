mod common;

use std::path::Path;
use std::process::{Command, Output};

use urban_perception::pipeline::{self, Manifest, OUTPUT_FILES};

use common::{copy_dir, demo_dir, tree_bytes};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urban-perception")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_clean_bundle_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo_dir().join("config.json");
    let out = cli(&["--config", s(&cfg), "--out", s(tmp.path()), "validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(tmp.path().join("validation.csv")).unwrap();
    assert!(report.starts_with("table,severity,kind,row,message"));
}

#[test]
fn one_bad_score_fails_validation_with_a_report_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    copy_dir(&demo_dir(), &bundle);
    let ratings = bundle.join("ratings.csv");
    let text = std::fs::read_to_string(&ratings).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let (head, _) = lines[5].rsplit_once(',').unwrap();
    lines[5] = format!("{head},9");
    std::fs::write(&ratings, lines.join("\n") + "\n").unwrap();

    let out_dir = tmp.path().join("out");
    let out = cli(&["--config", s(&bundle.join("config.json")), "--out", s(&out_dir), "validate"]);
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(out_dir.join("validation.csv")).unwrap();
    let bad: Vec<&str> = report.lines().filter(|l| l.contains("out_of_range_score")).collect();
    assert_eq!(bad.len(), 1, "{report}");
    assert!(bad[0].starts_with("ratings,error,"));

    // later stages refuse the same inputs with the same exit code
    let out = cli(&["--config", s(&bundle.join("config.json")), "--out", s(&out_dir), "train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_report_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    copy_dir(&demo_dir(), &bundle);
    // a duplicate rating and an unknown image make the report non-trivial
    let ratings = bundle.join("ratings.csv");
    let mut text = std::fs::read_to_string(&ratings).unwrap();
    let dup = text.lines().nth(1).unwrap().to_string();
    text.push_str(&format!("{dup}\nrater00,nope,3\n"));
    std::fs::write(&ratings, text).unwrap();

    let cfg = bundle.join("config.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli(&["--config", s(&cfg), "--out", s(&a), "validate"]);
    cli(&["--config", s(&cfg), "--out", s(&b), "validate"]);
    let ra = std::fs::read(a.join("validation.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("validation.csv")).unwrap());
    assert!(String::from_utf8(ra).unwrap().lines().count() >= 3);
}

#[test]
fn synth_seed_changes_the_bundle_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = demo_dir().join("spec.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(cli(&["--out", s(&a), "synth", "--spec", s(&spec)]).status.success());
    assert!(cli(&["--seed", "8", "--out", s(&b), "synth", "--spec", s(&spec)]).status.success());
    assert_ne!(std::fs::read(a.join("ratings.csv")).unwrap(), std::fs::read(b.join("ratings.csv")).unwrap());
    for dir in [&a, &b] {
        let out = cli(&["--config", s(&dir.join("config.json")), "--out", s(&dir.join("out")), "validate"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn demo_spec_regenerates_the_committed_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["--out", s(tmp.path()), "synth", "--spec", s(&demo_dir().join("spec.json"))]);
    assert!(out.status.success());
    let sums = std::fs::read_to_string(demo_dir().join("SHA256SUMS")).unwrap();
    let mut checked = 0;
    for line in sums.lines() {
        let (hash, name) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(tmp.path().join(name.trim_start_matches("./"))).unwrap();
        assert_eq!(pipeline::sha256_hex(&bytes), hash, "{name}");
        checked += 1;
    }
    assert!(checked > 30);
}

#[test]
fn run_writes_every_output_with_headers_and_a_complete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo_dir().join("config.json");
    let out = cli(&["--config", s(&cfg), "--out", s(tmp.path()), "--threads", "2", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let files = tree_bytes(tmp.path());
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    let mut expected = OUTPUT_FILES.to_vec();
    expected.sort();
    assert_eq!(names, expected);

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.files.len(), files.len() - 1);
    for entry in &manifest.files {
        let (_, bytes) = files.iter().find(|f| f.0 == entry.path).unwrap();
        assert_eq!(entry.sha256, pipeline::sha256_hex(bytes));
        assert_eq!(entry.bytes, bytes.len() as u64);
    }
    for (name, bytes) in files.iter().filter(|f| f.0.ends_with(".csv")) {
        let text = std::str::from_utf8(bytes).unwrap();
        let header = text.lines().next().unwrap_or_default();
        assert!(!header.is_empty(), "{name} has no header");
        assert!(header.split(',').all(|h| !h.is_empty() && h.parse::<f64>().is_err()), "{name}: {header}");
    }
}

#[test]
fn exit_codes_for_config_and_stage_failures() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["validate"]).status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"inputs": {}, "nonsense": 1}"#).unwrap();
    assert_eq!(cli(&["--config", s(&bad), "validate"]).status.code(), Some(2));

    // align without a trained model is a stage failure
    let cfg = demo_dir().join("config.json");
    let out = cli(&["--config", s(&cfg), "--out", s(tmp.path()), "align"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[align]"));
}
