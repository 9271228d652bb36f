use std::time::Duration;

use ecg_monitor::telemetry::{
    decode_record, encode_record, evaluate_alert, open_sink, publish, read_records, retrieve_and_plot, AlertPolicy,
    FileSink, HttpSink, LoopbackServer, Sink, SinkSpec, TelemetryRecord, DEFAULT_MAX_ECG,
};
use ecg_monitor::render::svg_points;
use ecg_monitor::Error;
use proptest::prelude::*;

fn record(ts: i64, ecg: Vec<f64>) -> TelemetryRecord {
    TelemetryRecord {
        device_id: "ecg-monitor-01".into(),
        timestamp: ts,
        bpm: 72.0,
        location: "location-unavailable".into(),
        ecg,
    }
}

fn line(rec: &TelemetryRecord) -> String {
    String::from_utf8(encode_record(rec, DEFAULT_MAX_ECG).unwrap()).unwrap()
}

#[test]
fn golden_bytes() {
    let golden = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/canonical_record.json")).unwrap();
    let rec = record(1_700_000_000, vec![2048.0, 2101.0, 2987.0, 3890.0, 1804.0, 2050.0]);
    assert_eq!(encode_record(&rec, DEFAULT_MAX_ECG).unwrap(), golden);
}

#[test]
fn oversized_and_malformed_records_are_rejected() {
    let big = record(0, vec![0.0; 11]);
    assert!(matches!(encode_record(&big, 10), Err(Error::PayloadTooLarge { .. })));
    assert!(decode_record(b"{\"device_id\":1}", 10).is_err());
    assert!(decode_record(b"not json", 10).is_err());
}

#[test]
fn alert_sweep() {
    let p = AlertPolicy::default();
    for bpm in 1..=300 {
        let alert = evaluate_alert(bpm as f64, &p, "here", 5).unwrap();
        assert_eq!(alert.is_some(), !(50..=120).contains(&bpm), "bpm {bpm}");
        if let Some(a) = alert {
            assert_eq!(a.location, "here");
            assert!(a.message.contains(&bpm.to_string()));
        }
    }
    let inclusive = AlertPolicy {
        alert_on_boundary: true,
        ..p
    };
    assert!(evaluate_alert(50.0, &inclusive, "", 0).unwrap().is_some());
}

#[test]
fn file_sink_appends_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.jsonl");
    let sink = FileSink::new(&path, 0);
    for ts in 0..3 {
        let r = sink.publish(line(&record(ts, vec![1.0])).as_bytes()).unwrap();
        assert_eq!(r.sequence, ts as u64);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let got = read_records(text.as_bytes(), DEFAULT_MAX_ECG).unwrap();
    assert_eq!(got.records.len(), 3);
    assert_eq!(got.warnings, 0);
}

#[test]
fn unwritable_path_fails_after_retries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.jsonl");
    let sink = FileSink::new(&path, 2);
    match sink.publish(b"{}") {
        Err(Error::DeliveryFailed { retries, .. }) => assert_eq!(retries, 2),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!path.exists());
}

#[test]
fn loopback_receives_in_order() {
    let server = LoopbackServer::start(0).unwrap();
    let sink = HttpSink::new(server.port(), 1);
    let sent: Vec<String> = (0..5).map(|ts| line(&record(ts, vec![ts as f64]))).collect();
    for s in &sent {
        sink.publish(s.as_bytes()).unwrap();
    }
    let got = server.wait_for(5, Duration::from_secs(5));
    let got: Vec<String> = got.into_iter().map(|b| String::from_utf8(b).unwrap()).collect();
    assert_eq!(got, sent);
}

#[test]
fn closed_port_is_a_delivery_failure() {
    let port = {
        let s = LoopbackServer::start(0).unwrap();
        s.port()
    };
    let sink = open_sink(&SinkSpec::Http(port), 0);
    assert!(matches!(publish(sink.as_ref(), b"{}"), Err(Error::DeliveryFailed { .. })));
}

#[test]
fn sink_spec_parsing() {
    assert_eq!("stdout".parse::<SinkSpec>().unwrap(), SinkSpec::Stdout);
    assert_eq!("http:8080".parse::<SinkSpec>().unwrap(), SinkSpec::Http(8080));
    assert_eq!("file:/tmp/x".parse::<SinkSpec>().unwrap(), SinkSpec::File("/tmp/x".into()));
    assert!("ftp:1".parse::<SinkSpec>().is_err());
}

fn plot_lines(lines: &[String]) -> (ecg_monitor::telemetry::PlotSummary, Vec<(usize, usize)>) {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.jsonl");
    let out = dir.path().join("out.svg");
    std::fs::write(&src, lines.join("\n")).unwrap();
    let summary = retrieve_and_plot(&src, &out, 16, 16, 500.0).unwrap();
    (summary, svg_points(&std::fs::read_to_string(&out).unwrap()))
}

#[test]
fn retrieval_orders_by_timestamp_and_counts_bad_lines() {
    let a = line(&record(10, vec![0.0, 1.0]));
    let b = line(&record(5, vec![2.0, 3.0]));
    let (s, pts) = plot_lines(&[a.clone(), b.clone()]);
    assert_eq!((s.records, s.samples, s.warnings), (2, 4, 0));
    let (_, sorted_pts) = plot_lines(&[b, a.clone()]);
    assert_eq!(pts, sorted_pts);

    let (s, _) = plot_lines(&[a.clone(), "{broken".into(), line(&record(20, vec![4.0]))]);
    assert_eq!((s.records, s.warnings), (2, 1));

    let (s, _) = plot_lines(&[a]);
    assert_eq!((s.records, s.samples), (1, 2));
}

proptest! {
    #[test]
    fn records_round_trip(
        device in "[a-zA-Z0-9 _\\-\"\\\\é]{0,20}",
        ts in any::<i64>(),
        bpm in 0.0f64..400.0,
        ecg in prop::collection::vec(prop_oneof![(0u16..4096).prop_map(f64::from), -10.0f64..10.0], 0..300),
    ) {
        let rec = TelemetryRecord { device_id: device, timestamp: ts, bpm, location: "x".into(), ecg };
        let bytes = encode_record(&rec, DEFAULT_MAX_ECG).unwrap();
        prop_assert!(!bytes.contains(&b'\n'));
        prop_assert_eq!(decode_record(&bytes, DEFAULT_MAX_ECG).unwrap(), rec);
    }
}
