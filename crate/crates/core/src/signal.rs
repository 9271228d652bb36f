//! Synthetic stand-ins for the electrodes: a Gaussian-template ECG, test
//! sinusoids, and the additive interference picked up by the body.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{SampleFrame, Unit};

/// One Gaussian bump of the beat template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Peak amplitude in millivolts.
    pub amplitude: f64,
    /// Centre as a fraction of the beat period.
    pub center: f64,
    /// Standard deviation as a fraction of the beat period.
    pub width: f64,
}

impl Wave {
    pub const fn new(amplitude: f64, center: f64, width: f64) -> Self {
        Wave {
            amplitude,
            center,
            width,
        }
    }
}

/// P, Q, R, S and T waves of a single beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcgTemplateParams {
    pub p: Wave,
    pub q: Wave,
    pub r: Wave,
    pub s: Wave,
    pub t: Wave,
}

impl Default for EcgTemplateParams {
    /// Lead-II-like morphology with a 1 mV R wave.
    fn default() -> Self {
        EcgTemplateParams {
            p: Wave::new(0.12, 0.20, 0.025),
            q: Wave::new(-0.12, 0.37, 0.010),
            r: Wave::new(1.00, 0.40, 0.012),
            s: Wave::new(-0.20, 0.43, 0.010),
            t: Wave::new(0.25, 0.64, 0.040),
        }
    }
}

impl EcgTemplateParams {
    pub fn waves(&self) -> [Wave; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }

    /// Every amplitude multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let s = |w: Wave| Wave::new(w.amplitude * k, w.center, w.width);
        EcgTemplateParams {
            p: s(self.p),
            q: s(self.q),
            r: s(self.r),
            s: s(self.s),
            t: s(self.t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let waves = self.waves();
        for (name, w) in ["P", "Q", "R", "S", "T"].iter().zip(waves.iter()) {
            if !(w.width > 0.0 && w.width.is_finite()) {
                return Err(Error::invalid(format!("{name} width must be positive")));
            }
            if !(0.0..=1.0).contains(&w.center) || !w.amplitude.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} centre must lie in [0, 1] and amplitude be finite"
                )));
            }
        }
        if waves.windows(2).any(|p| p[1].center <= p[0].center) {
            return Err(Error::invalid(
                "wave centres must be strictly increasing in P,Q,R,S,T order",
            ));
        }
        // Zero is allowed so that a silent template is expressible.
        if self.r.amplitude < 0.0 {
            return Err(Error::invalid("R amplitude must not be negative"));
        }
        Ok(())
    }

    /// Template value at beat phase `phase` in [0, 1). Each bump wraps
    /// around the beat boundary so consecutive beats join smoothly.
    pub fn value_at_phase(&self, phase: f64) -> f64 {
        self.waves()
            .iter()
            .map(|w| {
                let mut d = phase - w.center;
                d -= d.round();
                w.amplitude * (-0.5 * (d / w.width).powi(2)).exp()
            })
            .sum()
    }
}

/// Additive interference configuration. Amplitudes are in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mains_amplitude: f64,
    pub mains_freq: f64,
    pub wander_amplitude: f64,
    pub wander_freq: f64,
    pub emg_sigma: f64,
    pub dc_offset: f64,
    pub common_mode_amplitude: f64,
    pub common_mode_freq: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            mains_amplitude: 0.0,
            mains_freq: 50.0,
            wander_amplitude: 0.0,
            wander_freq: 0.2,
            emg_sigma: 0.0,
            dc_offset: 0.0,
            common_mode_amplitude: 0.0,
            common_mode_freq: 50.0,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let amps = [
            ("mains_amplitude", self.mains_amplitude),
            ("wander_amplitude", self.wander_amplitude),
            ("emg_sigma", self.emg_sigma),
            ("common_mode_amplitude", self.common_mode_amplitude),
        ];
        for (name, v) in amps {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("mains_freq", self.mains_freq),
            ("wander_freq", self.wander_freq),
            ("common_mode_freq", self.common_mode_freq),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::invalid("dc_offset must be finite"));
        }
        Ok(())
    }
}

/// The two electrode-side channels: differential ECG and the common-mode
/// pickup, both in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignal {
    pub differential: SampleFrame,
    pub common_mode: SampleFrame,
}

impl SourceSignal {
    pub fn new(differential: SampleFrame, common_mode: SampleFrame) -> Result<Self> {
        if differential.sample_rate != common_mode.sample_rate
            || differential.len() != common_mode.len()
        {
            return Err(Error::invalid(
                "differential and common-mode frames must share rate and length",
            ));
        }
        Ok(SourceSignal {
            differential,
            common_mode,
        })
    }

    /// A differential-only source with a silent common-mode channel.
    pub fn differential_only(differential: SampleFrame) -> Self {
        let common_mode = differential.with_values(vec![0.0; differential.len()]);
        SourceSignal {
            differential,
            common_mode,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.differential.sample_rate
    }
}

fn sample_count(sample_rate: f64, duration: f64) -> usize {
    (sample_rate * duration).round() as usize
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Periodic ECG at `bpm`, values in millivolts.
pub fn generate_ecg(
    params: &EcgTemplateParams,
    bpm: f64,
    sample_rate: f64,
    duration: f64,
) -> Result<SampleFrame> {
    check_positive("bpm", bpm)?;
    check_positive("sample_rate", sample_rate)?;
    check_positive("duration", duration)?;
    params.validate()?;
    let fundamental = bpm / 60.0;
    if sample_rate < 4.0 * fundamental {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate} Hz is below 4x the {fundamental} Hz beat rate"
        )));
    }
    let period = 60.0 / bpm;
    let values = (0..sample_count(sample_rate, duration))
        .map(|n| {
            let t = n as f64 / sample_rate;
            params.value_at_phase((t / period).fract())
        })
        .collect();
    SampleFrame::new(sample_rate, Unit::Millivolts, values)
}

/// `amplitude · sin(2π·freq·n/sample_rate)`, values in millivolts.
pub fn generate_sine(
    freq: f64,
    amplitude: f64,
    sample_rate: f64,
    duration: f64,
) -> Result<SampleFrame> {
    check_positive("sample_rate", sample_rate)?;
    check_positive("duration", duration)?;
    if !(freq >= 0.0 && freq < sample_rate / 2.0) {
        return Err(Error::invalid(format!(
            "frequency {freq} Hz must lie below Nyquist ({} Hz)",
            sample_rate / 2.0
        )));
    }
    if !amplitude.is_finite() {
        return Err(Error::invalid("amplitude must be finite"));
    }
    let w = 2.0 * PI * freq / sample_rate;
    let values = (0..sample_count(sample_rate, duration))
        .map(|n| amplitude * (w * n as f64).sin())
        .collect();
    SampleFrame::new(sample_rate, Unit::Millivolts, values)
}

/// Adds mains, baseline wander, seeded EMG noise and DC offset to `src`,
/// and synthesizes the common-mode channel.
pub fn add_noise(src: &SampleFrame, cfg: &NoiseConfig) -> Result<SourceSignal> {
    src.validate()?;
    cfg.validate()?;
    let fs = src.sample_rate;
    let tone = |amp: f64, freq: f64, t: f64| {
        if amp == 0.0 {
            0.0
        } else {
            amp * (2.0 * PI * freq * t).sin()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let normal = Normal::new(0.0, cfg.emg_sigma)
        .map_err(|e| Error::invalid(format!("emg_sigma: {e}")))?;

    let mut differential = Vec::with_capacity(src.len());
    let mut common_mode = Vec::with_capacity(src.len());
    for (n, &v) in src.values.iter().enumerate() {
        let t = src.start_time + n as f64 / fs;
        let emg = if cfg.emg_sigma > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        differential.push(
            v + tone(cfg.mains_amplitude, cfg.mains_freq, t)
                + tone(cfg.wander_amplitude, cfg.wander_freq, t)
                + emg
                + cfg.dc_offset,
        );
        common_mode.push(tone(cfg.common_mode_amplitude, cfg.common_mode_freq, t));
    }
    SourceSignal::new(src.with_values(differential), src.with_values(common_mode))
}
