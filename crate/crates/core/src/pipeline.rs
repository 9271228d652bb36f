//! End-to-end run: source → noise → front end → ADC → ping-pong buffer →
//! FFT notch + smoothing → edge trigger → heart rate → telemetry.

use serde::Serialize;

use crate::acquisition::{self, AdcCode, PingPongBuffer};
use crate::config::{PipelineConfig, SourceKind};
use crate::dsp::{self, HeartRateReading};
use crate::error::{Error, Result};
use crate::frame::{SampleFrame, Unit};
use crate::frontend::{self, MetricsReport};
use crate::signal;
use crate::telemetry::{self, AlertEvent, DeliveryReceipt, TelemetryRecord};

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reading: HeartRateReading,
    pub edges: Vec<dsp::EdgeEvent>,
    pub metrics: Option<MetricsReport>,
    pub record: TelemetryRecord,
    pub payload: Vec<u8>,
    pub alert: Option<AlertEvent>,
    pub receipts: Vec<DeliveryReceipt>,
    /// The front end hit a supply rail somewhere in the run.
    pub saturated: bool,
    pub overrun: bool,
    pub halves: usize,
    /// Filtered signal the detector ran on, volts.
    pub processed: SampleFrame,
}

/// Compact, serializable view of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub bpm: f64,
    pub period_s: f64,
    pub median_bpm: f64,
    pub edges: usize,
    pub halves: usize,
    pub saturated: bool,
    pub overrun: bool,
    pub alert: Option<AlertEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

impl PipelineOutput {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            bpm: self.reading.bpm,
            period_s: self.reading.period,
            median_bpm: self.reading.median_bpm,
            edges: self.edges.len(),
            halves: self.halves,
            saturated: self.saturated,
            overrun: self.overrun,
            alert: self.alert.clone(),
            metrics: self.metrics.clone(),
        }
    }
}

/// Electrode-side signal (millivolts) for the configured source.
pub fn source_frame(cfg: &PipelineConfig, bpm: f64, duration: f64) -> Result<SampleFrame> {
    let s = &cfg.signal;
    match s.source {
        SourceKind::Ecg => signal::generate_ecg(&s.template, bpm, s.sample_rate, duration),
        SourceKind::Sine => signal::generate_sine(bpm / 60.0, s.amplitude, s.sample_rate, duration),
    }
}

/// Streams codes through a ping-pong buffer with a consumer that takes
/// every half as soon as it is ready. Returns the consumed codes, the
/// number of halves and whether an overrun occurred.
pub fn stream_through_buffer(codes: &[AdcCode], half_capacity: usize) -> Result<(Vec<AdcCode>, usize, bool)> {
    let mut buf = PingPongBuffer::new(half_capacity)?;
    let mut out = Vec::with_capacity(codes.len());
    let mut halves = 0;
    let mut drain = |buf: &mut PingPongBuffer, out: &mut Vec<AdcCode>| {
        if let Some(h) = buf.take_ready_half() {
            out.extend_from_slice(&h.codes);
            halves += 1;
        }
    };
    for &c in codes {
        if buf.push_sample(c).is_some() {
            drain(&mut buf, &mut out);
        }
    }
    if buf.flush().is_some() {
        drain(&mut buf, &mut out);
    }
    Ok((out, halves, buf.overrun()))
}

pub fn run_pipeline(cfg: &PipelineConfig, bpm: f64, duration: f64) -> Result<PipelineOutput> {
    cfg.validate()?;
    let fs = cfg.signal.sample_rate;
    if cfg.dsp.settle >= duration {
        return Err(Error::invalid(format!(
            "settle time {} s leaves nothing of a {duration} s run",
            cfg.dsp.settle
        ))
        .in_module("dsp"));
    }

    let src = source_frame(cfg, bpm, duration).map_err(|e| e.in_module("signal_model"))?;
    let sig = signal::add_noise(&src, &cfg.noise).map_err(|e| e.in_module("signal_model"))?;

    let spec = cfg.frontend_spec().map_err(|e| e.in_module("analog_frontend"))?;
    let analog = frontend::apply_frontend(&sig, &spec, fs).map_err(|e| e.in_module("analog_frontend"))?;

    let adc = cfg.adc_config();
    let codes = acquisition::quantize_frame(&analog.frame, &adc).map_err(|e| e.in_module("acquisition"))?;
    let (consumed, halves, overrun) =
        stream_through_buffer(&codes, cfg.buffer.half_capacity).map_err(|e| e.in_module("acquisition"))?;

    let skip = ((cfg.dsp.settle * fs).round() as usize).min(consumed.len());
    let kept = &consumed[skip..];
    let code_frame = acquisition::codes_to_frame(kept, fs)
        .map_err(|e| e.in_module("acquisition"))?
        .with_start_time(skip as f64 / fs);
    let volts = acquisition::dequantize_frame(&code_frame, &adc).map_err(|e| e.in_module("acquisition"))?;

    let dsp_err = |e: Error| e.in_module("dsp");
    let notched = dsp::fft_notch(&volts, cfg.dsp.notch_center, cfg.dsp.notch_half_band).map_err(dsp_err)?;
    let processed = dsp::smooth_emg(&notched, cfg.dsp.smooth_window).map_err(dsp_err)?;
    let edges = dsp::detect_rising_edges(&processed, &cfg.trigger).map_err(dsp_err)?;
    let mut reading = dsp::heart_rate_from_edges(&edges, fs).map_err(dsp_err)?;
    // Edge indices are relative to the kept window.
    for e in [&mut reading.edge_pair.0, &mut reading.edge_pair.1] {
        e.time = processed.time_at(e.sample_index);
    }

    let metrics = if cfg.metrics.enabled {
        Some(frontend::measure_metrics(&spec, fs, &cfg.metrics.setup).map_err(|e| e.in_module("analog_frontend"))?)
    } else {
        None
    };

    let t = &cfg.telemetry;
    let tel_err = |e: Error| e.in_module("telemetry");
    let tail = kept.len().saturating_sub(t.max_ecg);
    let record = TelemetryRecord {
        device_id: t.device_id.clone(),
        timestamp: t.timestamp,
        bpm: reading.bpm,
        location: t.location.clone(),
        ecg: kept[tail..].iter().map(|c| c.0 as f64).collect(),
    };
    let payload = telemetry::encode_record(&record, t.max_ecg).map_err(tel_err)?;
    let alert = telemetry::evaluate_alert(reading.bpm, &cfg.alert, &t.location, t.timestamp).map_err(tel_err)?;

    let mut receipts = Vec::new();
    if let Some(spec) = &t.sink {
        let sink = telemetry::open_sink(spec, t.retries);
        receipts.push(telemetry::publish(sink.as_ref(), &payload).map_err(tel_err)?);
    }
    if let (Some(spec), Some(a)) = (&t.alert_sink, &alert) {
        let sink = telemetry::open_sink(spec, t.retries);
        receipts.push(telemetry::publish(sink.as_ref(), &a.to_json()).map_err(tel_err)?);
    }

    Ok(PipelineOutput {
        reading,
        edges,
        metrics,
        record,
        payload,
        alert,
        receipts,
        saturated: analog.saturated,
        overrun,
        halves,
        processed: SampleFrame {
            unit: Unit::Volts,
            ..processed
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_buffer_streaming_is_lossless() {
        let codes: Vec<AdcCode> = (0..1000u16).map(AdcCode).collect();
        let (out, halves, overrun) = stream_through_buffer(&codes, 64).unwrap();
        assert_eq!(out, codes);
        assert_eq!(halves, 16);
        assert!(!overrun);
    }

    #[test]
    fn module_name_prefixes_errors() {
        let cfg = PipelineConfig::default();
        // 20000 bpm needs ≥ 1333 Hz sampling
        let err = run_pipeline(&cfg, 20_000.0, 2.0).unwrap_err();
        assert!(err.to_string().starts_with("signal_model: "), "{err}");
    }
}
