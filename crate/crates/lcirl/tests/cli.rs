use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lcirl");

// Short horizons keep the expert optimizations quick.
const SMALL_SPEC: &str = r#"
[scene]
id = "small"
horizon = 20
gap_jitter = 4.0
speed_jitter = 1.0
"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn lcirl(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(BIN).current_dir(dir).env_remove("LCIRL_CONFIG").args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let r = lcirl(dir, args);
    assert_eq!(r.code, 0, "{args:?}\n{}", r.stderr);
    r.stdout
}

fn summary(r: &Run) -> Value {
    let line = r.stderr.lines().last().unwrap();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {}", r.stderr))
}

fn json_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("spec.toml"), SMALL_SPEC).unwrap();
    ok(d, &["synth", "--spec", "spec.toml", "--theta-star", "1,0.05,20,2,2", "--n", "3", "--out-dir", "syn"]);
    assert_eq!(json_files(&d.join("syn")), ["small-000.json", "small-001.json", "small-002.json"]);

    let out = ok(d, &["train", "--data-dir", "syn", "--split", "all", "--out-model", "m.json"]);
    assert!(out.contains("baseline model from 3 scenarios"), "{out}");
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("m.report.json")).unwrap()).unwrap();
    assert_eq!(report["scenarios"].as_array().unwrap().len(), 3);

    ok(d, &["generate", "--model", "m.json", "--data-dir", "syn", "--out-dir", "gen_a"]);
    ok(
        d,
        &["generate", "--model", "m.json", "--scenario", "syn/small-001.json", "--out-dir", "gen_b", "--restarts", "1"],
    );
    assert_eq!(json_files(&d.join("gen_a")).len(), 3);
    assert_eq!(json_files(&d.join("gen_a/reports")).len(), 3);
    assert_eq!(json_files(&d.join("gen_b")), ["small-001.json"]);

    // Every expert needs a generated counterpart in both sets.
    let r = lcirl(d, &["eval", "--expert-dir", "syn", "--gen-dir-a", "gen_a", "--gen-dir-b", "gen_b", "--out", "ev"]);
    assert_eq!(r.code, 2);
    assert!(summary(&r)["message"].as_str().unwrap().contains("small-000"), "{}", r.stderr);
    ok(d, &["generate", "--model", "m.json", "--data-dir", "syn", "--out-dir", "gen_b", "--restarts", "1"]);
    let table = ok(d, &["eval", "--expert-dir", "syn", "--gen-dir-a", "gen_a", "--gen-dir-b", "gen_b", "--out", "ev"]);
    assert!(table.contains("MEE"), "{table}");
    for f in ["report.txt", "report.csv", "scenarios.csv", "bands.csv"] {
        assert!(d.join("ev").join(f).is_file(), "{f}");
    }
    let scenarios = fs::read_to_string(d.join("ev/scenarios.csv")).unwrap();
    assert_eq!(scenarios.lines().count(), 4);

    ok(
        d,
        &["plot", "--scenario", "syn/small-000.json", "--gen", "gen_a/small-000.json", "--time", "1.0", "--out", "fig"],
    );
    let svg = fs::read_to_string(d.join("fig.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let csv = fs::read_to_string(d.join("fig.csv")).unwrap();
    assert!(csv.starts_with("series,step,time,x,y,psi,v,omega,speed,present"));
    assert_eq!(csv.lines().count(), 1 + 2 * 20 + 4 * 20);
}

#[test]
fn ingest_reads_the_synth_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n", "1", "--out-dir", "syn", "--fixture-format", "ngsim"]);
    let out = ok(d, &["ingest", "--input", "syn/fixtures/recording.csv", "--out-dir", "ing"]);
    assert!(out.starts_with("1 scenarios"), "{out}");
    let truth: Value =
        serde_json::from_str(&fs::read_to_string(d.join("syn/fixtures/recording_truth.json")).unwrap()).unwrap();
    let id = format!("recording-{}-{}", truth["ego_id"], truth["change_frame"]);
    let scenario: Value = serde_json::from_str(&fs::read_to_string(d.join(format!("ing/{id}.json"))).unwrap()).unwrap();
    for track in scenario["adjacent"].as_array().unwrap() {
        let role = track["role"].as_str().unwrap();
        assert_eq!(track["vehicle_id"], truth["neighbors"][role], "{role}");
    }
    let log: Value =
        serde_json::from_str(&fs::read_to_string(d.join("ing/reports/extraction_log.json")).unwrap()).unwrap();
    assert_eq!(log["inputs"][0]["scenarios"][0], id.as_str());

    // Reading the same file as meters puts every lane fit out of scale.
    let r = lcirl(
        d,
        &["ingest", "--input", "syn/fixtures/recording.csv", "--units", "m", "--vicinity", "1", "--out-dir", "ing2"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("0 scenarios"), "{}", r.stdout);
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let r = lcirl(d, &["train", "--out-model", "m.json"]);
    assert_eq!(r.code, 2);
    let s = summary(&r);
    assert_eq!((s["error"].as_str(), s["exit_code"].as_i64()), (Some("input"), Some(2)));
    assert!(s["message"].as_str().unwrap().contains("--data-dir"));

    let r = lcirl(d, &["train", "--data-dir", "absent", "--out-model", "m.json"]);
    assert_eq!((r.code, summary(&r)["error"].as_str()), (2, Some("io")));

    fs::write(d.join("bad.csv"), "vehicle_id,frame,x,y,lane_id\n1,1,0,0,1\n1,2,x,0,1\n").unwrap();
    let r = lcirl(d, &["ingest", "--input", "bad.csv", "--schema", "simple", "--out-dir", "o"]);
    assert_eq!(r.code, 2);
    assert!(summary(&r)["message"].as_str().unwrap().contains("data row 2"), "{}", r.stderr);

    let r = lcirl(d, &["--jobs", "0", "synth", "--out-dir", "s"]);
    assert_eq!(r.code, 2);
    let r = lcirl(d, &["synth", "--theta-star", "1,2,3", "--out-dir", "s"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn numerical_failures_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n", "1", "--out-dir", "syn"]);
    // An ego kilometres off the road overflows the lateral feature.
    let path = d.join("syn/synth-000.json");
    let mut s: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let shift = |v: &mut Value| *v = Value::from(v.as_f64().unwrap() + 5000.0);
    shift(&mut s["ego"]["x0"]["x"]);
    for st in s["ego"]["states"].as_array_mut().unwrap() {
        shift(&mut st["x"]);
    }
    fs::create_dir(d.join("far")).unwrap();
    fs::write(d.join("far/far.json"), serde_json::to_string(&s).unwrap()).unwrap();
    let r = lcirl(d, &["train", "--data-dir", "far", "--split", "all", "--out-model", "m.json"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert_eq!(summary(&r)["error"], "numerical");
}

#[test]
fn flags_beat_config_and_config_beats_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.toml"), "[synth]\nn = 3\nout_dir = \"from_config\"\nseed = 4\n").unwrap();
    ok(d, &["--config", "c.toml", "synth"]);
    assert_eq!(json_files(&d.join("from_config")).len(), 3);
    ok(d, &["--config", "c.toml", "synth", "--n", "2", "--out-dir", "from_flag"]);
    assert_eq!(json_files(&d.join("from_flag")).len(), 2);
    assert!(!d.join("synth-002.json").exists());

    let out = Command::new(BIN)
        .current_dir(d)
        .env("LCIRL_CONFIG", "c.toml")
        .args(["synth", "--out-dir", "from_env"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json_files(&d.join("from_env")).len(), 3);
    // Same seed from the file, so the scenes match.
    assert_eq!(
        fs::read(d.join("from_env/synth-001.json")).unwrap(),
        fs::read(d.join("from_config/synth-001.json")).unwrap()
    );

    fs::write(d.join("typo.toml"), "[synth]\nnn = 3\n").unwrap();
    assert_eq!(lcirl(d, &["--config", "typo.toml", "synth", "--out-dir", "x"]).code, 2);
}
