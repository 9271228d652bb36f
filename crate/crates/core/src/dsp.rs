//! Digital post-processing: FFT-domain mains removal, EMG smoothing and the
//! edge-trigger heart-rate detector.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::SampleFrame;

/// Zeroes every FFT bin within `half_band` Hz of `center` (and its mirror
/// bin), then transforms back. No zero padding: the transform length is
/// the frame length.
pub fn fft_notch(frame: &SampleFrame, center: f64, half_band: f64) -> Result<SampleFrame> {
    frame.validate()?;
    let n = frame.len();
    if n < 2 {
        return Err(Error::invalid("fft_notch needs at least 2 samples"));
    }
    let fs = frame.sample_rate;
    if !(center >= 0.0 && center < fs / 2.0) {
        return Err(Error::invalid(format!(
            "notch centre {center} Hz must lie below Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    if !(half_band >= 0.0 && half_band.is_finite()) {
        return Err(Error::invalid("half_band must be >= 0"));
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = frame.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);

    let bin_hz = fs / n as f64;
    let slack = 1e-9 * bin_hz;
    for (k, bin) in buf.iter_mut().enumerate() {
        // Bins k and n−k share the same |frequency|, so both are cleared.
        let freq = k.min(n - k) as f64 * bin_hz;
        if (freq - center).abs() <= half_band + slack {
            *bin = Complex64::new(0.0, 0.0);
        }
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(frame.with_values(buf.iter().map(|c| c.re * scale).collect()))
}

/// Centered moving average; near the edges the window is truncated to the
/// available samples.
pub fn smooth_emg(frame: &SampleFrame, window: usize) -> Result<SampleFrame> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    let half = window / 2;
    let v = &frame.values;
    let n = v.len();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(frame.with_values(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub sample_index: usize,
    pub time: f64,
    pub kind: EdgeKind,
}

/// Trigger settings. `None` levels are derived from the frame: the level
/// defaults to the midrange `(min+max)/2` and the band to 2% of the
/// peak-to-peak span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub trigger_level: Option<f64>,
    pub band_epsilon: Option<f64>,
    pub run_length: usize,
    /// Seconds after an accepted edge during which scanning is suspended.
    pub refractory: f64,
    /// Sample index where scanning begins.
    pub start_index: usize,
}

pub const DEFAULT_BAND_FRACTION: f64 = 0.02;

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            trigger_level: None,
            band_epsilon: None,
            run_length: 3,
            refractory: 0.25,
            start_index: 0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_length < 3 {
            return Err(Error::invalid(format!(
                "run_length must be >= 3, got {}",
                self.run_length
            )));
        }
        if !(self.refractory >= 0.0 && self.refractory.is_finite()) {
            return Err(Error::invalid("refractory must be >= 0"));
        }
        if let Some(e) = self.band_epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid("band_epsilon must be >= 0"));
            }
        }
        if let Some(l) = self.trigger_level {
            if !l.is_finite() {
                return Err(Error::invalid("trigger_level must be finite"));
            }
        }
        Ok(())
    }

    /// Concrete `(level, epsilon)` for `frame`.
    pub fn resolve(&self, frame: &SampleFrame) -> (f64, f64) {
        let (lo, hi) = frame.min_max().unwrap_or((0.0, 0.0));
        let level = self.trigger_level.unwrap_or((lo + hi) / 2.0);
        let eps = self.band_epsilon.unwrap_or(DEFAULT_BAND_FRACTION * (hi - lo));
        (level, eps)
    }
}

fn detect_edges(frame: &SampleFrame, cfg: &TriggerConfig, kind: EdgeKind) -> Result<Vec<EdgeEvent>> {
    cfg.validate()?;
    let v = &frame.values;
    let run = cfg.run_length;
    if v.len() < run {
        return Ok(Vec::new());
    }
    let (level, eps) = cfg.resolve(frame);
    let (band_lo, band_hi) = (level - eps, level + eps);
    let skip = ((cfg.refractory * frame.sample_rate).ceil() as usize).max(1);

    let mut edges = Vec::new();
    let mut i = cfg.start_index;
    while i + run <= v.len() {
        let w = &v[i..i + run];
        // A flat run is not an edge.
        let monotone = match kind {
            EdgeKind::Rising => w.windows(2).all(|p| p[1] >= p[0]) && w[run - 1] > w[0],
            EdgeKind::Falling => w.windows(2).all(|p| p[1] <= p[0]) && w[run - 1] < w[0],
        };
        let (wmin, wmax) = w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if monotone && wmin <= band_hi && wmax >= band_lo {
            let mid = i + run / 2;
            edges.push(EdgeEvent {
                sample_index: mid,
                time: frame.time_at(mid),
                kind,
            });
            i = mid + skip;
        } else {
            i += 1;
        }
    }
    Ok(edges)
}

/// Scans for runs of `run_length` non-decreasing (and not entirely flat)
/// samples that touch the trigger band; the middle sample of each run is
/// the trigger point.
pub fn detect_rising_edges(frame: &SampleFrame, cfg: &TriggerConfig) -> Result<Vec<EdgeEvent>> {
    detect_edges(frame, cfg, EdgeKind::Rising)
}

/// Mirror of [`detect_rising_edges`] for non-increasing runs.
pub fn detect_falling_edges(frame: &SampleFrame, cfg: &TriggerConfig) -> Result<Vec<EdgeEvent>> {
    detect_edges(frame, cfg, EdgeKind::Falling)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartRateReading {
    pub bpm: f64,
    /// Seconds between the latest pair of rising edges.
    pub period: f64,
    pub edge_pair: (EdgeEvent, EdgeEvent),
    /// Median over all consecutive rising-edge intervals.
    pub median_period: f64,
    pub median_bpm: f64,
}

/// Converts the rising-edge interval to beats per minute.
pub fn heart_rate_from_edges(edges: &[EdgeEvent], sample_rate: f64) -> Result<HeartRateReading> {
    if sample_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let rising: Vec<&EdgeEvent> = edges.iter().filter(|e| e.kind == EdgeKind::Rising).collect();
    if rising.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rising edges, found {}",
            rising.len()
        )));
    }
    let mut periods = Vec::with_capacity(rising.len() - 1);
    for pair in rising.windows(2) {
        if pair[1].sample_index <= pair[0].sample_index {
            return Err(Error::invalid("edge indices must be strictly increasing"));
        }
        periods.push((pair[1].sample_index - pair[0].sample_index) as f64 / sample_rate);
    }
    let period = *periods.last().expect("at least one interval");
    let median_period = median(&mut periods);
    let (a, b) = (*rising[rising.len() - 2], *rising[rising.len() - 1]);
    Ok(HeartRateReading {
        bpm: 60.0 / period,
        period,
        edge_pair: (a, b),
        median_period,
        median_bpm: 60.0 / median_period,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
