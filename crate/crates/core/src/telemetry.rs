//! Cloud-side records: canonical JSON encoding, abnormal heart-rate alerts,
//! pluggable delivery sinks and the retrieve-and-plot path.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::{SampleFrame, Unit};
use crate::render;

pub const DEFAULT_MAX_ECG: usize = 5000;

/// One uploaded record. Field order is the wire key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub device_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    #[serde(serialize_with = "shortest_number")]
    pub bpm: f64,
    pub location: String,
    #[serde(serialize_with = "shortest_numbers")]
    pub ecg: Vec<f64>,
}

/// Integral values print without a fraction (`2048`, not `2048.0`); the
/// rest use the shortest representation that round-trips.
fn shortest_number<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

fn shortest_numbers<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Num(f64);
    impl Serialize for Num {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            shortest_number(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&Num(x))?;
    }
    seq.end()
}

impl TelemetryRecord {
    pub fn validate(&self, max_ecg: usize) -> Result<()> {
        if !(self.bpm > 0.0 && self.bpm.is_finite()) {
            return Err(Error::invalid(format!("bpm must be positive, got {}", self.bpm)));
        }
        if self.ecg.len() > max_ecg {
            return Err(Error::PayloadTooLarge {
                len: self.ecg.len(),
                max: max_ecg,
            });
        }
        if let Some(i) = self.ecg.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("ecg sample {i} is not finite")));
        }
        Ok(())
    }
}

/// Compact JSON, keys in the order `device_id, timestamp, bpm, location, ecg`.
pub fn encode_record(rec: &TelemetryRecord, max_ecg: usize) -> Result<Vec<u8>> {
    rec.validate(max_ecg)?;
    serde_json::to_vec(rec).map_err(|e| Error::Parse(e.to_string()))
}

pub fn decode_record(bytes: &[u8], max_ecg: usize) -> Result<TelemetryRecord> {
    let rec: TelemetryRecord = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    rec.validate(max_ecg)?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertPolicy {
    pub low_bpm: f64,
    pub high_bpm: f64,
    /// Treat a reading exactly on a threshold as abnormal.
    pub alert_on_boundary: bool,
}

impl Default for AlertPolicy {
    fn default() -> Self {
        AlertPolicy {
            low_bpm: 50.0,
            high_bpm: 120.0,
            alert_on_boundary: false,
        }
    }
}

impl AlertPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_bpm > 0.0 && self.low_bpm < self.high_bpm && self.high_bpm.is_finite()) {
            return Err(Error::invalid(format!(
                "alert thresholds must satisfy 0 < low < high, got {} / {}",
                self.low_bpm, self.high_bpm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    #[serde(serialize_with = "shortest_number")]
    pub bpm: f64,
    pub message: String,
    pub location: String,
    pub timestamp: i64,
}

impl AlertEvent {
    /// Text stand-in for the spoken alert.
    pub fn voice_line(&self) -> String {
        format!("ALERT {} at {}", self.message, self.location)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("alert serializes")
    }
}

/// Returns an alert when `bpm` lies outside `[low_bpm, high_bpm]`.
pub fn evaluate_alert(bpm: f64, policy: &AlertPolicy, location: &str, timestamp: i64) -> Result<Option<AlertEvent>> {
    if !(bpm > 0.0 && bpm.is_finite()) {
        return Err(Error::invalid(format!("bpm must be positive, got {bpm}")));
    }
    policy.validate()?;
    let (low, high) = if policy.alert_on_boundary {
        (bpm <= policy.low_bpm, bpm >= policy.high_bpm)
    } else {
        (bpm < policy.low_bpm, bpm > policy.high_bpm)
    };
    let message = if high {
        format!("heart rate {bpm} bpm above high threshold {} bpm", policy.high_bpm)
    } else if low {
        format!("heart rate {bpm} bpm below low threshold {} bpm", policy.low_bpm)
    } else {
        return Ok(None);
    };
    Ok(Some(AlertEvent {
        bpm,
        message,
        location: location.to_string(),
        timestamp,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReceipt {
    pub sink: String,
    pub bytes: usize,
    /// Per-sink count of successful deliveries, starting at 0.
    pub sequence: u64,
    pub attempts: u32,
}

/// A destination for JSON payloads. Implementations serialize their own
/// writes so `publish` may be called from several threads.
pub trait Sink: Send + Sync {
    fn publish(&self, payload: &[u8]) -> Result<DeliveryReceipt>;
    fn describe(&self) -> String;
}

fn reject_newlines(payload: &[u8]) -> Result<()> {
    if payload.contains(&b'\n') {
        return Err(Error::invalid("payload must not contain newlines"));
    }
    Ok(())
}

fn with_retries(retries: u32, mut attempt: impl FnMut() -> std::result::Result<(), String>) -> Result<u32> {
    let mut last = String::new();
    for n in 0..=retries {
        match attempt() {
            Ok(()) => return Ok(n + 1),
            Err(e) => last = e,
        }
    }
    Err(Error::DeliveryFailed {
        retries,
        reason: last,
    })
}

/// Appends one payload per line to a file.
#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    retries: u32,
    delivered: Mutex<u64>,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>, retries: u32) -> Self {
        FileSink {
            path: path.into(),
            retries,
            delivered: Mutex::new(0),
        }
    }
}

impl Sink for FileSink {
    fn publish(&self, payload: &[u8]) -> Result<DeliveryReceipt> {
        reject_newlines(payload)?;
        let mut line = Vec::with_capacity(payload.len() + 1);
        line.extend_from_slice(payload);
        line.push(b'\n');
        let mut delivered = self.delivered.lock().unwrap_or_else(|e| e.into_inner());
        let attempts = with_retries(self.retries, || {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| format!("{}: {e}", self.path.display()))?;
            f.write_all(&line).map_err(|e| format!("{}: {e}", self.path.display()))
        })?;
        let sequence = *delivered;
        *delivered += 1;
        Ok(DeliveryReceipt {
            sink: self.describe(),
            bytes: payload.len(),
            sequence,
            attempts,
        })
    }

    fn describe(&self) -> String {
        format!("file:{}", self.path.display())
    }
}

#[derive(Debug, Default)]
pub struct StdoutSink {
    delivered: Mutex<u64>,
}

impl Sink for StdoutSink {
    fn publish(&self, payload: &[u8]) -> Result<DeliveryReceipt> {
        reject_newlines(payload)?;
        let mut delivered = self.delivered.lock().unwrap_or_else(|e| e.into_inner());
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        out.write_all(payload)
            .and_then(|_| out.write_all(b"\n"))
            .and_then(|_| out.flush())
            .map_err(|e| Error::DeliveryFailed {
                retries: 0,
                reason: e.to_string(),
            })?;
        let sequence = *delivered;
        *delivered += 1;
        Ok(DeliveryReceipt {
            sink: self.describe(),
            bytes: payload.len(),
            sequence,
            attempts: 1,
        })
    }

    fn describe(&self) -> String {
        "stdout".into()
    }
}

/// POSTs each payload to `http://127.0.0.1:<port>/telemetry`.
pub struct HttpSink {
    url: String,
    retries: u32,
    agent: ureq::Agent,
    delivered: Mutex<u64>,
}

impl HttpSink {
    pub fn new(port: u16, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(5)))
            .build()
            .new_agent();
        HttpSink {
            url: format!("http://127.0.0.1:{port}/telemetry"),
            retries,
            agent,
            delivered: Mutex::new(0),
        }
    }
}

impl Sink for HttpSink {
    fn publish(&self, payload: &[u8]) -> Result<DeliveryReceipt> {
        let mut delivered = self.delivered.lock().unwrap_or_else(|e| e.into_inner());
        let attempts = with_retries(self.retries, || {
            self.agent
                .post(&self.url)
                .header("Content-Type", "application/json")
                .send(payload)
                .map(|_| ())
                .map_err(|e| format!("{}: {e}", self.url))
        })?;
        let sequence = *delivered;
        *delivered += 1;
        Ok(DeliveryReceipt {
            sink: self.describe(),
            bytes: payload.len(),
            sequence,
            attempts,
        })
    }

    fn describe(&self) -> String {
        self.url.clone()
    }
}

/// In-process HTTP listener on 127.0.0.1 that records every POST body.
pub struct LoopbackServer {
    server: Arc<tiny_http::Server>,
    received: Arc<Mutex<Vec<Vec<u8>>>>,
    port: u16,
    worker: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Binds `port` (0 picks a free one).
    pub fn start(port: u16) -> Result<Self> {
        let server = tiny_http::Server::http(("127.0.0.1", port))
            .map_err(|e| Error::DeliveryFailed {
                retries: 0,
                reason: format!("loopback bind on port {port}: {e}"),
            })?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| Error::invalid("loopback listener has no IP address"))?;
        let server = Arc::new(server);
        let received = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let server = Arc::clone(&server);
            let received = Arc::clone(&received);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let ok = *req.method() == tiny_http::Method::Post;
                    let mut body = Vec::new();
                    let read = req.as_reader().read_to_end(&mut body).is_ok();
                    let status = if ok && read {
                        received.lock().unwrap_or_else(|e| e.into_inner()).push(body);
                        200
                    } else {
                        405
                    };
                    let _ = req.respond(tiny_http::Response::empty(status));
                }
            })
        };
        Ok(LoopbackServer {
            server,
            received,
            port,
            worker: Some(worker),
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn received(&self) -> Vec<Vec<u8>> {
        self.received.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Polls until `n` payloads have arrived or `timeout` expires.
    pub fn wait_for(&self, n: usize, timeout: Duration) -> Vec<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        loop {
            let got = self.received();
            if got.len() >= n || Instant::now() >= deadline {
                return got;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// `file:<path>`, `stdout` or `http:<port>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SinkSpec {
    File(PathBuf),
    Stdout,
    Http(u16),
}

impl FromStr for SinkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stdout" {
            Ok(SinkSpec::Stdout)
        } else if let Some(p) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            Ok(SinkSpec::File(PathBuf::from(p)))
        } else if let Some(port) = s.strip_prefix("http:") {
            port.parse()
                .map(SinkSpec::Http)
                .map_err(|_| Error::invalid(format!("bad port in sink {s:?}")))
        } else {
            Err(Error::invalid(format!(
                "unknown sink {s:?} (expected file:<path>, stdout or http:<port>)"
            )))
        }
    }
}

impl TryFrom<String> for SinkSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SinkSpec> for String {
    fn from(s: SinkSpec) -> String {
        match s {
            SinkSpec::File(p) => format!("file:{}", p.display()),
            SinkSpec::Stdout => "stdout".into(),
            SinkSpec::Http(port) => format!("http:{port}"),
        }
    }
}

pub fn open_sink(spec: &SinkSpec, retries: u32) -> Box<dyn Sink> {
    match spec {
        SinkSpec::File(p) => Box::new(FileSink::new(p.clone(), retries)),
        SinkSpec::Stdout => Box::new(StdoutSink::default()),
        SinkSpec::Http(port) => Box::new(HttpSink::new(*port, retries)),
    }
}

pub fn publish(sink: &dyn Sink, payload: &[u8]) -> Result<DeliveryReceipt> {
    sink.publish(payload)
}

/// Records decoded from a JSON-lines stream, with the count of lines that
/// failed to decode.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub records: Vec<TelemetryRecord>,
    pub warnings: usize,
}

impl Retrieved {
    /// ECG arrays concatenated in timestamp order (stable for ties).
    pub fn concatenated_ecg(&self) -> Vec<f64> {
        let mut recs: Vec<&TelemetryRecord> = self.records.iter().collect();
        recs.sort_by_key(|r| r.timestamp);
        recs.iter().flat_map(|r| r.ecg.iter().copied()).collect()
    }
}

pub fn read_records<R: Read>(reader: R, max_ecg: usize) -> Result<Retrieved> {
    let mut records = Vec::new();
    let mut warnings = 0;
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_record(line.as_bytes(), max_ecg) {
            Ok(r) => records.push(r),
            Err(_) => warnings += 1,
        }
    }
    Ok(Retrieved { records, warnings })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotSummary {
    pub records: usize,
    pub samples: usize,
    pub warnings: usize,
}

/// Decodes a JSON-lines file and renders the concatenated ECG to SVG.
pub fn retrieve_and_plot(
    source: &Path,
    out: &Path,
    width: usize,
    height: usize,
    sample_rate: f64,
) -> Result<PlotSummary> {
    let file = std::fs::File::open(source).map_err(|e| Error::io(source, e))?;
    let got = read_records(file, usize::MAX)?;
    let ecg = got.concatenated_ecg();
    let samples = ecg.len();
    let frame = SampleFrame::new(sample_rate, Unit::Millivolts, ecg)?;
    render::export_svg(&frame, width, height, out)?;
    Ok(PlotSummary {
        records: got.records.len(),
        samples,
        warnings: got.warnings,
    })
}
