//! Pipeline configuration file: TOML sections of `key = value` pairs.
//! Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::{AdcConfig, DEFAULT_HALF_CAPACITY};
use crate::dsp::TriggerConfig;
use crate::error::{Error, Result};
use crate::frontend::{ComponentValues, FrontEndSpec, MetricsSetup};
use crate::render::{DEFAULT_HEIGHT, DEFAULT_WIDTH};
use crate::signal::{EcgTemplateParams, NoiseConfig};
use crate::telemetry::{AlertPolicy, SinkSpec, DEFAULT_MAX_ECG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Ecg,
    /// Sine at `bpm/60` Hz, the bench signal-generator test.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub source: SourceKind,
    pub bpm: f64,
    pub duration: f64,
    pub sample_rate: f64,
    /// Sine amplitude, millivolts.
    pub amplitude: f64,
    pub template: EcgTemplateParams,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            source: SourceKind::Ecg,
            bpm: 72.0,
            duration: 10.0,
            sample_rate: 500.0,
            amplitude: 0.5,
            template: EcgTemplateParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSection {
    pub resolution_bits: u32,
    pub vref: f64,
}

impl Default for AdcSection {
    fn default() -> Self {
        let d = AdcConfig::default();
        AdcSection {
            resolution_bits: d.resolution_bits,
            vref: d.vref,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferSection {
    pub half_capacity: usize,
}

impl Default for BufferSection {
    fn default() -> Self {
        BufferSection {
            half_capacity: DEFAULT_HALF_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspSection {
    pub notch_center: f64,
    pub notch_half_band: f64,
    pub smooth_window: usize,
    /// Seconds discarded from the start of the acquired record before
    /// detection, while the analog high-pass settles.
    pub settle: f64,
}

impl Default for DspSection {
    fn default() -> Self {
        DspSection {
            notch_center: 50.0,
            notch_half_band: 1.0,
            smooth_window: 5,
            settle: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub width: usize,
    pub height: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetrySection {
    pub device_id: String,
    pub location: String,
    pub timestamp: i64,
    pub max_ecg: usize,
    pub retries: u32,
    pub sink: Option<SinkSpec>,
    pub alert_sink: Option<SinkSpec>,
}

impl Default for TelemetrySection {
    fn default() -> Self {
        TelemetrySection {
            device_id: "ecg-monitor-01".into(),
            location: "location-unavailable".into(),
            timestamp: 0,
            max_ecg: DEFAULT_MAX_ECG,
            retries: 3,
            sink: None,
            alert_sink: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub enabled: bool,
    pub setup: MetricsSetup,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub signal: SignalSection,
    pub noise: NoiseConfig,
    pub frontend: FrontEndSpec,
    /// When present, gains and corner frequencies come from these parts
    /// instead of `[frontend]`.
    pub components: Option<ComponentValues>,
    pub adc: AdcSection,
    pub buffer: BufferSection,
    pub dsp: DspSection,
    pub trigger: TriggerConfig,
    pub alert: AlertPolicy,
    pub render: RenderSection,
    pub telemetry: TelemetrySection,
    pub metrics: MetricsSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The front-end spec in effect, taking `[components]` into account.
    pub fn frontend_spec(&self) -> Result<FrontEndSpec> {
        match &self.components {
            None => Ok(self.frontend.clone()),
            Some(c) => {
                let derived = FrontEndSpec::from_components(c)?;
                Ok(FrontEndSpec {
                    notch_q: self.frontend.notch_q,
                    cmrr_db: self.frontend.cmrr_db,
                    lift_bias: self.frontend.lift_bias,
                    supply_clip: self.frontend.supply_clip,
                    stages: self.frontend.stages.clone(),
                    ..derived
                })
            }
        }
    }

    pub fn adc_config(&self) -> AdcConfig {
        AdcConfig {
            resolution_bits: self.adc.resolution_bits,
            vref: self.adc.vref,
            sample_rate: self.signal.sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.signal;
        for (name, v) in [("bpm", s.bpm), ("duration", s.duration), ("sample_rate", s.sample_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("signal.{name} must be positive, got {v}")));
            }
        }
        let tag = |section: &'static str| move |e: Error| Error::Config(format!("[{section}] {e}"));
        s.template.validate().map_err(tag("signal.template"))?;
        self.noise.validate().map_err(tag("noise"))?;
        self.frontend_spec()
            .and_then(|f| f.validate())
            .map_err(tag("frontend"))?;
        self.adc_config().validate().map_err(tag("adc"))?;
        if self.buffer.half_capacity == 0 {
            return Err(Error::Config("[buffer] half_capacity must be >= 1".into()));
        }
        if self.dsp.smooth_window == 0 || self.dsp.smooth_window.is_multiple_of(2) {
            return Err(Error::Config("[dsp] smooth_window must be odd".into()));
        }
        if !(self.dsp.settle >= 0.0 && self.dsp.settle.is_finite()) {
            return Err(Error::Config("[dsp] settle must be >= 0".into()));
        }
        self.trigger.validate().map_err(tag("trigger"))?;
        self.alert.validate().map_err(tag("alert"))?;
        if self.render.width == 0 || self.render.height == 0 {
            return Err(Error::Config("[render] width and height must be positive".into()));
        }
        Ok(())
    }
}
