use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hcrb_core::config::ScenarioFile;
use hcrb_core::experiments::ResultTable;

fn hcrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcrb"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run hcrb")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_table(p: &Path) -> ResultTable {
    ResultTable::read_csv(std::fs::File::open(p).unwrap()).unwrap()
}

#[test]
fn version_names_the_schema() {
    let o = hcrb(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains(&format!("schema {}", hcrb_core::config::SCHEMA_VERSION)),
        "{text}"
    );
}

#[test]
fn reference_known_exact_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = hcrb(&[
        "bounds",
        "--scenario",
        &config("reference.json"),
        "--known",
        "--exact",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = read_table(&out);
    let golden = read_table(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/reference_known_exact.csv"),
    );
    assert_eq!(got.rows.len(), golden.rows.len());
    for (g, w) in got.rows.iter().zip(&golden.rows) {
        assert_eq!((&g.quantity, g.method), (&w.quantity, w.method));
        let (a, b) = (g.value.unwrap(), w.value.unwrap());
        assert!(
            (a - b).abs() <= 1e-9 * b.abs(),
            "{}: {a} vs {b}",
            g.quantity
        );
    }
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("range_known"));
}

#[test]
fn endfire_target_exits_with_z0_diagnostic() {
    let o = hcrb(&["bounds", "--scenario", &config("endfire.json"), "--unknown"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("Z=0"), "{err}");
    assert!(err.contains("weak direction"), "{err}");
}

#[test]
fn malformed_json_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"contour": {"preset": "sedan"}, "target": "#).unwrap();
    let out = dir.path().join("b.csv");
    let o = hcrb(&[
        "bounds",
        "--scenario",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_field_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("reference.json"))
        .unwrap()
        .replace("\"alpha\"", "\"roughness\"");
    let p = dir.path().join("s.json");
    std::fs::write(&p, text).unwrap();
    let o = hcrb(&["bounds", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn normalized_scenario_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let norm = dir.path().join("norm.json");
    let o = hcrb(&[
        "bounds",
        "--scenario",
        &config("reference.json"),
        "--print-normalized",
        "--out",
        norm.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let original = ScenarioFile::load(&configs().join("reference.json")).unwrap();
    let echoed = ScenarioFile::load(&norm).unwrap();
    assert_eq!(
        echoed.to_scenario().unwrap(),
        original.to_scenario().unwrap()
    );
    assert!(echoed.contour.preset.is_none());
}

#[test]
fn simulate_is_reproducible_and_dumps_frames() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let frames = dir.path().join(format!("{name}.frames"));
        let o = Command::new(env!("CARGO_BIN_EXE_hcrb"))
            .args([
                "simulate",
                "--scenario",
                &config("reference.json"),
                "--seed",
                "11",
                "--trials",
                "2",
                "--dump-frames",
                frames.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env("HCRB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read_to_string(out).unwrap(), frames)
    };
    let (a, frames) = run("a.csv", "1");
    let (b, _) = run("b.csv", "2");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    assert!(a.starts_with("trial,model,range,direction,low_confidence"));

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(frames.join("frame_00001.json")).unwrap())
            .unwrap();
    let (rows, cols) = (
        sidecar["rows"].as_u64().unwrap(),
        sidecar["cols"].as_u64().unwrap(),
    );
    let bytes = std::fs::metadata(frames.join("frame_00001.c32"))
        .unwrap()
        .len();
    assert_eq!(bytes, rows * cols * 8);
    assert_eq!(rows, 30);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.json");
    let text = format!(
        r#"{{"scenario_file": "{}", {body}}}"#,
        config("reference.json")
    );
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn snr_sweep_writes_csv_and_gnuplot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#""sweep": {"kind": "snr", "values_db": [20, 30, 40]}, "seed": 3"#,
    );
    let out = dir.path().join("snr.csv");
    let o = hcrb(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_table(&out);
    assert_eq!(t.sweep_values(), vec![20.0, 30.0, 40.0]);
    let dat = std::fs::read_to_string(out.with_extension("dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn diversity_runs_from_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#""sweep": {"kind": "radar_counts", "counts": [1, 2], "radius": 7}, "seed": 3"#,
    );
    let out = dir.path().join("div.csv");
    let o = hcrb(&[
        "diversity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_table(&out);
    let one = t
        .get("peb_unknown", hcrb_core::experiments::Method::Exact, 1.0)
        .unwrap();
    let two = t
        .get("peb_unknown", hcrb_core::experiments::Method::Exact, 2.0)
        .unwrap();
    assert!(two < one);
}

#[test]
fn diversity_rejects_a_range_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#""sweep": {"kind": "ranges", "values": [10]}, "seed": 3"#,
    );
    let o = hcrb(&["diversity", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tiny_monte_carlo_records_trials_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#""sweep": {"kind": "ranges", "values": [20]}, "trials": 4, "seed": 9"#,
    );
    let out = dir.path().join("mc.csv");
    let o = hcrb(&[
        "--sequential",
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_table(&out);
    let row = t
        .rows
        .iter()
        .find(|r| r.quantity == "range_extended")
        .expect("extended-target variance row");
    assert!(row.n_trials <= 4 && row.n_trials > 0);
    assert!(row.seed.is_some());
}
