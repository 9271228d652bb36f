use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecg_monitor::render::svg_points;
use ecg_monitor::telemetry::{read_records, LoopbackServer, DEFAULT_MAX_ECG};
use serde_json::Value;

fn ecgmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgmon")).args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn detect_on_two_hertz_fixture_reads_120() {
    let v = json(&ecgmon(&["detect", "-i", p(&fixture("sine_2hz.csv"))]));
    assert_eq!(v["bpm"].as_f64(), Some(120.0));
    assert_eq!(v["period_s"].as_f64(), Some(0.5));
    let edges = v["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 9);
    assert!(edges[0]["index"].is_u64() && edges[0]["t"].is_f64());
}

#[test]
fn simulate_reproduces_fixture_bytes() {
    let out = ecgmon(&["simulate", "--source", "sine", "--bpm", "120", "--duration", "4", "--amplitude", "1"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, std::fs::read(fixture("sine_2hz.csv")).unwrap());
}

#[test]
fn metrics_reports_cmrr_and_response() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("resp.csv");
    let v = json(&ecgmon(&["metrics", "--response", p(&csv), "--points", "50"]));
    assert!((v["cmrr_db"].as_f64().unwrap() - 93.16).abs() <= 0.1);
    for key in ["differential_gain", "common_mode_gain", "bandwidth_low", "bandwidth_high", "bw", "mains_attenuation_db", "input_impedance", "equiv_input_noise"] {
        assert!(v[key].is_number(), "{key}");
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("freq_hz,mag_db\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn plot_of_empty_input_is_an_empty_svg() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    let svg = dir.path().join("out.svg");
    let out = ecgmon(&["plot", "-i", p(&input), "--svg", p(&svg)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<svg") && text.contains("<polyline"));
    assert!(svg_points(&text).is_empty());
}

#[test]
fn plot_draws_ascii_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("out.svg");
    let out = ecgmon(&["plot", "-i", p(&fixture("sine_2hz.csv")), "--width", "64", "--height", "16", "--svg", p(&svg)]);
    assert!(out.status.success());
    let ascii = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ascii.lines().count(), 8);
    assert!(ascii.lines().all(|l| l.chars().count() == 64));
    assert_eq!(svg_points(&std::fs::read_to_string(&svg).unwrap()).len(), 64);
}

#[test]
fn notch_removes_mains_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy.csv");
    let clean = dir.path().join("clean.csv");
    let out = ecgmon(&["simulate", "--source", "sine", "--bpm", "120", "--duration", "2", "--mains", "0.5", "-o", p(&noisy)]);
    assert!(out.status.success());
    assert!(ecgmon(&["notch", "-i", p(&noisy), "-o", p(&clean)]).status.success());
    let v = json(&ecgmon(&["detect", "-i", p(&clean)]));
    assert_eq!(v["bpm"].as_f64(), Some(120.0));
}

#[test]
fn stream_emits_every_code_in_order() {
    let out = ecgmon(&["stream", "-i", p(&fixture("sine_2hz.csv")), "--half-capacity", "64"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seq"].as_u64(), Some(i as u64));
        assert_eq!(v["half"].as_u64(), Some(i as u64 % 2));
        assert_eq!(v["overrun"].as_bool(), Some(false));
        total += v["codes"].as_array().unwrap().len();
        assert!(line.starts_with("{\"seq\":"));
    }
    assert_eq!(total, 2000);
    let again = ecgmon(&["stream", "-i", p(&fixture("sine_2hz.csv")), "--half-capacity", "64"]);
    assert_eq!(again.stdout, text.as_bytes());
}

#[test]
fn send_to_file_then_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("t.jsonl");
    let alerts = dir.path().join("a.jsonl");
    let sink = format!("file:{}", log.display());
    let alert_sink = format!("file:{}", alerts.display());
    for (bpm, ts) in [("72", "20"), ("130", "10")] {
        let out = ecgmon(&["send", "--bpm", bpm, "--timestamp", ts, "-i", p(&fixture("sine_2hz.csv")), "--sink", &sink, "--alert-sink", &alert_sink]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let got = read_records(std::fs::File::open(&log).unwrap(), DEFAULT_MAX_ECG).unwrap();
    assert_eq!(got.records.len(), 2);
    assert_eq!(std::fs::read_to_string(&alerts).unwrap().lines().count(), 1);

    let svg = dir.path().join("r.svg");
    let v = json(&ecgmon(&["retrieve", "-i", p(&log), "--svg", p(&svg)]));
    assert_eq!(v["records"].as_u64(), Some(2));
    assert_eq!(v["samples"].as_u64(), Some(4000));
    assert_eq!(v["warnings"].as_u64(), Some(0));
}

#[test]
fn send_thresholds_are_configurable() {
    let out = ecgmon(&["send", "--bpm", "100", "--high-bpm", "90"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("above"));
    let quiet = ecgmon(&["send", "--bpm", "100"]);
    assert!(quiet.stderr.is_empty());
}

#[test]
fn send_over_http_reaches_loopback() {
    let server = LoopbackServer::start(0).unwrap();
    let sink = format!("http:{}", server.port());
    let out = ecgmon(&["send", "--bpm", "64", "--sink", &sink]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = server.wait_for(1, std::time::Duration::from_secs(5));
    let v: Value = serde_json::from_slice(&got[0]).unwrap();
    assert_eq!(v["bpm"].as_f64(), Some(64.0));
}

#[test]
fn run_sine_source_reports_120_deterministically() {
    let a = ecgmon(&["run", "--source", "sine", "--bpm", "120"]);
    let v = json(&a);
    assert_eq!(v["bpm"].as_f64(), Some(120.0));
    assert_eq!(a.stdout, ecgmon(&["run", "--source", "sine", "--bpm", "120"]).stdout);
}

#[test]
fn run_with_config_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[signal]\nsource = \"sine\"\nbpm = 90.0\n\n[noise]\nmains_amplitude = 0.3\n").unwrap();
    let v = json(&ecgmon(&["run", "--config", p(&cfg)]));
    assert!((v["bpm"].as_f64().unwrap() - 90.0).abs() <= 0.5);
    let v = json(&ecgmon(&["run", "--config", p(&cfg), "--bpm", "60"]));
    assert!((v["bpm"].as_f64().unwrap() - 60.0).abs() <= 0.5);
}

#[test]
fn bad_config_is_a_usage_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[signal]\nbpm = 72.0\n\n[adc]\nbogus = 1\n").unwrap();
    let out = ecgmon(&["run", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn exit_codes() {
    assert_eq!(ecgmon(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ecgmon(&["detect"]).status.code(), Some(1));
    assert_eq!(ecgmon(&["--help"]).status.code(), Some(0));
    let missing = ecgmon(&["detect", "-i", "/nonexistent/frame.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/frame.csv"));
    assert_eq!(ecgmon(&["run", "--duration", "0.5"]).status.code(), Some(2));
    assert_eq!(ecgmon(&["detect", "-i", "x", "--run-length", "2"]).status.code(), Some(1));
}
