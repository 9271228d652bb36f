//! `ecgmon`: command-line front end for the ECG monitor pipeline.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! pipeline stage fails at runtime.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecg_monitor::acquisition::{self, AdcCode, SharedPingPong};
use ecg_monitor::config::{PipelineConfig, SourceKind};
use ecg_monitor::dsp::{self, TriggerConfig};
use ecg_monitor::frontend::{self, StageKind};
use ecg_monitor::pipeline;
use ecg_monitor::render::{self, Framebuffer};
use ecg_monitor::signal;
use ecg_monitor::telemetry::{self, AlertPolicy, SinkSpec, TelemetryRecord};
use ecg_monitor::{Error, SampleFrame, Unit};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ecgmon", version, about = "Simulated single-lead ECG monitor")]
struct Cli {
    /// TOML configuration file; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signal and write it as a `time,value` CSV frame.
    Simulate(SimulateArgs),
    /// Measure the analog front end and print the report as JSON.
    Metrics(MetricsArgs),
    /// Remove a mains band from a CSV frame with the FFT notch.
    Notch(NotchArgs),
    /// Detect rising edges in a CSV frame and report the heart rate.
    Detect(DetectArgs),
    /// Stream ADC codes through the ping-pong buffer, one JSON line per half.
    Stream(StreamArgs),
    /// Draw a CSV frame as ASCII art, optionally exporting SVG.
    Plot(PlotArgs),
    /// Publish a telemetry record and evaluate the heart-rate alert.
    Send(SendArgs),
    /// Read telemetry records back and plot the concatenated ECG as SVG.
    Retrieve(RetrieveArgs),
    /// Run the whole chain and print a JSON summary.
    Run(RunArgs),
}

#[derive(Args, Default)]
struct SignalFlags {
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long)]
    bpm: Option<f64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Sine amplitude in millivolts.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mains interference amplitude, millivolts.
    #[arg(long)]
    mains: Option<f64>,
    /// Baseline wander amplitude, millivolts.
    #[arg(long)]
    wander: Option<f64>,
    /// EMG noise standard deviation, millivolts.
    #[arg(long)]
    emg: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Ecg,
    Sine,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Stage {
    /// Electrode signal in millivolts.
    #[default]
    Source,
    /// Front-end output in volts.
    Frontend,
    /// Quantized ADC codes.
    Codes,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    signal: SignalFlags,
    #[arg(long, value_enum, default_value_t = Stage::Source)]
    stage: Stage,
    /// Output file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Also write the magnitude response to this CSV file.
    #[arg(long, value_name = "PATH")]
    response: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 0.01)]
    fmin: f64,
    #[arg(long, default_value_t = 240.0)]
    fmax: f64,
    /// Bypass the analog notch stage.
    #[arg(long)]
    no_notch: bool,
}

#[derive(Args)]
struct NotchArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    center: Option<f64>,
    #[arg(long)]
    half_band: Option<f64>,
    /// Follow the notch with a moving average of this odd width.
    #[arg(long)]
    smooth: Option<usize>,
}

#[derive(Args)]
struct TriggerFlags {
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    run_length: Option<usize>,
    /// Seconds.
    #[arg(long)]
    refractory: Option<f64>,
    #[arg(long)]
    start_index: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    trigger: TriggerFlags,
    /// Detect falling instead of rising edges.
    #[arg(long)]
    falling: bool,
}

#[derive(Args)]
struct StreamArgs {
    /// CSV frame in volts; without it the configured source is run through
    /// the front end.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Treat the input values as ADC codes rather than volts.
    #[arg(long)]
    codes: bool,
    #[command(flatten)]
    signal: SignalFlags,
    #[arg(long)]
    half_capacity: Option<usize>,
    /// Let the producer overwrite unread halves instead of waiting.
    #[arg(long)]
    free_running: bool,
    /// Consumer sleep after each half, milliseconds.
    #[arg(long, default_value_t = 0)]
    consumer_delay_ms: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SendArgs {
    #[arg(long)]
    bpm: f64,
    /// CSV frame whose values become the `ecg` array.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// `file:<path>`, `stdout` or `http:<port>`.
    #[arg(long)]
    sink: Option<SinkSpec>,
    #[arg(long)]
    alert_sink: Option<SinkSpec>,
    #[arg(long)]
    low_bpm: Option<f64>,
    #[arg(long)]
    high_bpm: Option<f64>,
    #[arg(long)]
    device_id: Option<String>,
    #[arg(long)]
    location: Option<String>,
    #[arg(long)]
    timestamp: Option<i64>,
    #[arg(long)]
    retries: Option<u32>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// JSON-lines file of telemetry records.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    svg: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    signal: SignalFlags,
    #[arg(long)]
    sink: Option<SinkSpec>,
    #[arg(long)]
    alert_sink: Option<SinkSpec>,
    #[arg(long)]
    low_bpm: Option<f64>,
    #[arg(long)]
    high_bpm: Option<f64>,
    /// Include bench metrics of the front end in the summary.
    #[arg(long)]
    metrics: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(usage),
        None => Ok(PipelineConfig::default()),
    }
}

fn finish_config(cfg: PipelineConfig) -> CliResult<PipelineConfig> {
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

impl SignalFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.signal;
        if let Some(k) = self.source {
            s.source = match k {
                SourceArg::Ecg => SourceKind::Ecg,
                SourceArg::Sine => SourceKind::Sine,
            };
        }
        set(&mut s.bpm, self.bpm);
        set(&mut s.duration, self.duration);
        set(&mut s.sample_rate, self.sample_rate);
        set(&mut s.amplitude, self.amplitude);
        let n = &mut cfg.noise;
        set(&mut n.rng_seed, self.seed);
        set(&mut n.mains_amplitude, self.mains);
        set(&mut n.wander_amplitude, self.wander);
        set(&mut n.emg_sigma, self.emg);
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn read_frame(path: &Path, unit: Unit, fallback_rate: f64) -> CliResult<SampleFrame> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    SampleFrame::read_csv(f, unit, fallback_rate)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn io_fail(e: io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn analog_frame(cfg: &PipelineConfig) -> CliResult<SampleFrame> {
    let src = pipeline::source_frame(cfg, cfg.signal.bpm, cfg.signal.duration)?;
    let sig = signal::add_noise(&src, &cfg.noise)?;
    let spec = cfg.frontend_spec()?;
    Ok(frontend::apply_frontend(&sig, &spec, cfg.signal.sample_rate)?.frame)
}

fn cmd_simulate(cfg: PipelineConfig, a: &SimulateArgs) -> CliResult<()> {
    let mut cfg = cfg;
    a.signal.apply(&mut cfg);
    let cfg = finish_config(cfg)?;
    let frame = match a.stage {
        Stage::Source => {
            let src = pipeline::source_frame(&cfg, cfg.signal.bpm, cfg.signal.duration)?;
            signal::add_noise(&src, &cfg.noise)?.differential
        }
        Stage::Frontend => analog_frame(&cfg)?,
        Stage::Codes => {
            let v = analog_frame(&cfg)?;
            let codes = acquisition::quantize_frame(&v, &cfg.adc_config())?;
            acquisition::codes_to_frame(&codes, cfg.signal.sample_rate)?
        }
    };
    let mut out = output(a.out.as_deref())?;
    frame.write_csv(&mut out)?;
    out.flush().map_err(io_fail)
}

fn cmd_metrics(cfg: PipelineConfig, a: &MetricsArgs) -> CliResult<()> {
    let mut cfg = cfg;
    set(&mut cfg.signal.sample_rate, a.sample_rate);
    let cfg = finish_config(cfg)?;
    let mut spec = cfg.frontend_spec()?;
    if a.no_notch {
        spec = spec.without_stage(StageKind::Notch);
    }
    let fs = cfg.signal.sample_rate;
    let report = frontend::measure_metrics(&spec, fs, &cfg.metrics.setup)?;
    if let Some(path) = &a.response {
        if a.points < 2 || !(a.fmin > 0.0 && a.fmax > a.fmin) {
            return Err(usage("--points must be >= 2 and 0 < --fmin < --fmax"));
        }
        let freqs = frontend::log_frequencies(a.fmin, a.fmax.min(fs / 2.0 * 0.999), a.points);
        let rows = frontend::frequency_response(&spec, fs, &freqs)?;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        frontend::write_response_csv(&rows, BufWriter::new(f))?;
    }
    println!("{}", serde_json::to_string(&report).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(())
}

fn cmd_notch(cfg: PipelineConfig, a: &NotchArgs) -> CliResult<()> {
    let mut cfg = cfg;
    set(&mut cfg.dsp.notch_center, a.center);
    set(&mut cfg.dsp.notch_half_band, a.half_band);
    if let Some(w) = a.smooth {
        cfg.dsp.smooth_window = w;
    }
    let cfg = finish_config(cfg)?;
    let frame = read_frame(&a.input, Unit::Volts, cfg.signal.sample_rate)?;
    let mut out_frame = dsp::fft_notch(&frame, cfg.dsp.notch_center, cfg.dsp.notch_half_band)?;
    if a.smooth.is_some() {
        out_frame = dsp::smooth_emg(&out_frame, cfg.dsp.smooth_window)?;
    }
    let mut out = output(a.out.as_deref())?;
    out_frame.write_csv(&mut out)?;
    out.flush().map_err(io_fail)
}

fn trigger_config(cfg: &PipelineConfig, t: &TriggerFlags) -> CliResult<TriggerConfig> {
    let mut tc = cfg.trigger.clone();
    if t.level.is_some() {
        tc.trigger_level = t.level;
    }
    if t.epsilon.is_some() {
        tc.band_epsilon = t.epsilon;
    }
    set(&mut tc.run_length, t.run_length);
    set(&mut tc.refractory, t.refractory);
    set(&mut tc.start_index, t.start_index);
    tc.validate().map_err(usage)?;
    Ok(tc)
}

fn cmd_detect(cfg: PipelineConfig, a: &DetectArgs) -> CliResult<()> {
    let tc = trigger_config(&cfg, &a.trigger)?;
    let frame = read_frame(&a.input, Unit::Volts, cfg.signal.sample_rate)?;
    let edges = if a.falling {
        dsp::detect_falling_edges(&frame, &tc)?
    } else {
        dsp::detect_rising_edges(&frame, &tc)?
    };
    let reading = dsp::heart_rate_from_edges(&edges, frame.sample_rate)?;
    let edges: Vec<_> = edges
        .iter()
        .map(|e| json!({"index": e.sample_index, "t": frame.time_at(e.sample_index)}))
        .collect();
    let doc = json!({"edges": edges, "bpm": reading.bpm, "period_s": reading.period});
    println!("{doc}");
    Ok(())
}

fn stream_codes(cfg: &PipelineConfig, a: &StreamArgs) -> CliResult<Vec<AdcCode>> {
    let adc = cfg.adc_config();
    match &a.input {
        Some(path) if a.codes => {
            let frame = read_frame(path, Unit::Codes, cfg.signal.sample_rate)?;
            frame
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v.fract() == 0.0 && v >= 0.0 && v <= adc.max_code() as f64 {
                        Ok(AdcCode(v as u16))
                    } else {
                        Err(Failure::Runtime(format!("{}: row {}: {v} is not an ADC code", path.display(), i + 1)))
                    }
                })
                .collect()
        }
        Some(path) => {
            let frame = read_frame(path, Unit::Volts, cfg.signal.sample_rate)?;
            Ok(acquisition::quantize_frame(&frame, &adc)?)
        }
        None => Ok(acquisition::quantize_frame(&analog_frame(cfg)?, &adc)?),
    }
}

fn cmd_stream(cfg: PipelineConfig, a: &StreamArgs) -> CliResult<()> {
    let mut cfg = cfg;
    a.signal.apply(&mut cfg);
    set(&mut cfg.buffer.half_capacity, a.half_capacity);
    let cfg = finish_config(cfg)?;
    let codes = stream_codes(&cfg, a)?;

    let shared = Arc::new(SharedPingPong::new(cfg.buffer.half_capacity)?);
    let producer = {
        let shared = Arc::clone(&shared);
        let free = a.free_running;
        thread::spawn(move || {
            for c in codes {
                if free {
                    shared.push(c);
                } else {
                    shared.push_blocking(c);
                }
            }
            shared.close();
        })
    };

    let mut out = BufWriter::new(io::stdout().lock());
    let delay = Duration::from_millis(a.consumer_delay_ms);
    let mut result = Ok(());
    while let Some((half, overrun)) = shared.wait_take(None) {
        let codes: Vec<String> = half.codes.iter().map(|c| c.0.to_string()).collect();
        let line = format!(
            "{{\"seq\":{},\"half\":{},\"overrun\":{},\"codes\":[{}]}}",
            half.seq,
            half.half,
            overrun,
            codes.join(",")
        );
        if let Err(e) = writeln!(out, "{line}") {
            result = Err(io_fail(e));
            break;
        }
        if !delay.is_zero() {
            thread::sleep(delay);
        }
    }
    if result.is_err() {
        // Keep draining so the producer can finish.
        while shared.wait_take(None).is_some() {}
    }
    producer
        .join()
        .map_err(|_| Failure::Runtime("acquisition: producer thread panicked".into()))?;
    result?;
    out.flush().map_err(io_fail)
}

fn cmd_plot(cfg: PipelineConfig, a: &PlotArgs) -> CliResult<()> {
    let mut cfg = cfg;
    set(&mut cfg.render.width, a.width);
    set(&mut cfg.render.height, a.height);
    let cfg = finish_config(cfg)?;
    let (w, h) = (cfg.render.width, cfg.render.height);
    let frame = read_frame(&a.input, Unit::Volts, cfg.signal.sample_rate)?;
    let (lo, hi) = render::auto_range(&frame);
    let trace = render::map_to_trace(&frame, w, h, lo, hi)?;
    let mut fb = Framebuffer::new(w, h)?;
    render::draw_trace(&mut fb, None, &trace);
    if let Some(path) = &a.svg {
        std::fs::write(path, render::svg_string(&trace, w)).map_err(|e| Error::io(path, e))?;
    }
    let mut out = BufWriter::new(io::stdout().lock());
    out.write_all(render::export_ascii(&fb).as_bytes()).map_err(io_fail)?;
    out.flush().map_err(io_fail)
}

fn alert_policy(cfg: &PipelineConfig, low: Option<f64>, high: Option<f64>) -> CliResult<AlertPolicy> {
    let mut p = cfg.alert.clone();
    set(&mut p.low_bpm, low);
    set(&mut p.high_bpm, high);
    p.validate().map_err(usage)?;
    Ok(p)
}

fn cmd_send(cfg: PipelineConfig, a: &SendArgs) -> CliResult<()> {
    let policy = alert_policy(&cfg, a.low_bpm, a.high_bpm)?;
    let t = &cfg.telemetry;
    let ecg = match &a.input {
        Some(p) => read_frame(p, Unit::Codes, cfg.signal.sample_rate)?.values,
        None => Vec::new(),
    };
    let record = TelemetryRecord {
        device_id: a.device_id.clone().unwrap_or_else(|| t.device_id.clone()),
        timestamp: a.timestamp.unwrap_or(t.timestamp),
        bpm: a.bpm,
        location: a.location.clone().unwrap_or_else(|| t.location.clone()),
        ecg,
    };
    let retries = a.retries.unwrap_or(t.retries);
    let payload = telemetry::encode_record(&record, t.max_ecg)?;
    let spec = a.sink.clone().or_else(|| t.sink.clone()).unwrap_or(SinkSpec::Stdout);
    telemetry::publish(telemetry::open_sink(&spec, retries).as_ref(), &payload)?;
    if let Some(alert) = telemetry::evaluate_alert(record.bpm, &policy, &record.location, record.timestamp)? {
        eprintln!("{}", alert.voice_line());
        if let Some(spec) = a.alert_sink.clone().or_else(|| t.alert_sink.clone()) {
            telemetry::publish(telemetry::open_sink(&spec, retries).as_ref(), &alert.to_json())?;
        }
    }
    Ok(())
}

fn cmd_retrieve(cfg: PipelineConfig, a: &RetrieveArgs) -> CliResult<()> {
    let w = a.width.unwrap_or(cfg.render.width);
    let h = a.height.unwrap_or(cfg.render.height);
    let fs = a.sample_rate.unwrap_or(cfg.signal.sample_rate);
    let s = telemetry::retrieve_and_plot(&a.input, &a.svg, w, h, fs)?;
    if s.warnings > 0 {
        eprintln!("warning: {} line(s) could not be decoded", s.warnings);
    }
    println!("{}", json!({"records": s.records, "samples": s.samples, "warnings": s.warnings}));
    Ok(())
}

fn cmd_run(cfg: PipelineConfig, a: &RunArgs) -> CliResult<()> {
    let mut cfg = cfg;
    a.signal.apply(&mut cfg);
    if a.sink.is_some() {
        cfg.telemetry.sink = a.sink.clone();
    }
    if a.alert_sink.is_some() {
        cfg.telemetry.alert_sink = a.alert_sink.clone();
    }
    set(&mut cfg.alert.low_bpm, a.low_bpm);
    set(&mut cfg.alert.high_bpm, a.high_bpm);
    cfg.metrics.enabled |= a.metrics;
    let cfg = finish_config(cfg)?;
    let out = pipeline::run_pipeline(&cfg, cfg.signal.bpm, cfg.signal.duration)?;
    if let Some(alert) = &out.alert {
        eprintln!("{}", alert.voice_line());
    }
    let summary = serde_json::to_string(&out.summary()).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{summary}");
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cfg, a),
        Command::Metrics(a) => cmd_metrics(cfg, a),
        Command::Notch(a) => cmd_notch(cfg, a),
        Command::Detect(a) => cmd_detect(cfg, a),
        Command::Stream(a) => cmd_stream(cfg, a),
        Command::Plot(a) => cmd_plot(cfg, a),
        Command::Send(a) => cmd_send(cfg, a),
        Command::Retrieve(a) => cmd_retrieve(cfg, a),
        Command::Run(a) => cmd_run(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
