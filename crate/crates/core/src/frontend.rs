//! Behavioral model of the analog acquisition chain: instrumentation and
//! voltage amplifiers, high-pass, low-pass, mains notch, right-leg drive
//! (as common-mode attenuation) and voltage lifting into the ADC range.
//!
//! Continuous stages are discretized with the bilinear transform, prewarped
//! at each stage's characteristic frequency.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{SampleFrame, Unit};
use crate::signal::SourceSignal;

/// Resistor (ohm) and capacitor (farad) values of the acquisition board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentValues {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r7: f64,
    /// High-pass resistor.
    pub r_hp: f64,
    pub c2: f64,
    pub r15: f64,
    pub c3: f64,
    pub r31: f64,
    pub c5: f64,
    pub r27: f64,
    pub c7: f64,
    /// Voltage amplifier feedback resistor.
    pub ra: f64,
    /// Voltage amplifier resistor to ground.
    pub rb: f64,
}

impl Default for ComponentValues {
    /// Values that reproduce the design targets: instrumentation gain 22,
    /// 0.072 Hz high-pass, 70.73 Hz low-pass, 49.79 Hz notch, and a
    /// voltage gain of 75 for a 1650 total.
    fn default() -> Self {
        ComponentValues {
            r1: 5e3,
            r2: 5e3,
            r3: 50e3,
            r4: 50e3,
            r5: 10e3,
            r7: 20e3,
            r_hp: 100_475.0,
            c2: 22e-6,
            r15: 22_500.0,
            c3: 100e-9,
            r31: 31_965.0,
            c5: 100e-9,
            r27: 31_965.0,
            c7: 100e-9,
            ra: 740e3,
            rb: 10e3,
        }
    }
}

impl ComponentValues {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("r4", self.r4),
            ("r5", self.r5),
            ("r7", self.r7),
            ("r_hp", self.r_hp),
            ("c2", self.c2),
            ("r15", self.r15),
            ("c3", self.c3),
            ("r31", self.r31),
            ("c5", self.c5),
            ("r27", self.r27),
            ("c7", self.c7),
            ("ra", self.ra),
            ("rb", self.rb),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `(1 + (R3+R4)/(R1+R2)) × R7/R5`
pub fn instrument_gain(c: &ComponentValues) -> Result<f64> {
    let first_den = c.r1 + c.r2;
    if first_den == 0.0 || c.r5 == 0.0 {
        return Err(Error::invalid("instrumentation amplifier denominator is zero"));
    }
    Ok((1.0 + (c.r3 + c.r4) / first_den) * c.r7 / c.r5)
}

/// Non-inverting second stage, `1 + Ra/Rb`.
pub fn voltage_gain(c: &ComponentValues) -> Result<f64> {
    if c.rb == 0.0 {
        return Err(Error::invalid("voltage amplifier Rb is zero"));
    }
    Ok(1.0 + c.ra / c.rb)
}

fn rc_corner(r: f64, c: f64) -> Result<f64> {
    if !(r > 0.0 && c > 0.0 && r.is_finite() && c.is_finite()) {
        return Err(Error::invalid(format!(
            "R and C must be positive, got R={r}, C={c}"
        )));
    }
    Ok(1.0 / (2.0 * PI * r * c))
}

/// `1/(2π·R_hp·C2)`
pub fn highpass_cutoff(c2: f64, r_hp: f64) -> Result<f64> {
    rc_corner(r_hp, c2)
}

/// `1/(2π·R15·C3)`
pub fn lowpass_cutoff(c3: f64, r15: f64) -> Result<f64> {
    rc_corner(r15, c3)
}

/// Geometric mean of the two notch leg frequencies.
pub fn notch_center(r31: f64, c5: f64, r27: f64, c7: f64) -> Result<f64> {
    Ok((rc_corner(r31, c5)? * rc_corner(r27, c7)?).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Highpass,
    Lowpass,
    Notch,
}

/// Derived parameters of the analog chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndSpec {
    pub instrument_gain: f64,
    pub voltage_gain: f64,
    pub f_ch: f64,
    pub f_cl: f64,
    pub f_0: f64,
    pub notch_q: f64,
    pub cmrr_db: f64,
    /// DC bias added after the gain stages, volts.
    pub lift_bias: f64,
    /// Output rails, volts.
    pub supply_clip: (f64, f64),
    /// Filter stages in application order. Leave a stage out to bypass it.
    pub stages: Vec<StageKind>,
}

pub const DEFAULT_NOTCH_Q: f64 = 5.0;
pub const DEFAULT_STAGES: [StageKind; 3] = [StageKind::Notch, StageKind::Lowpass, StageKind::Highpass];

impl Default for FrontEndSpec {
    fn default() -> Self {
        FrontEndSpec::table1()
    }
}

impl FrontEndSpec {
    /// Chain tuned so that the measured response matches the bench
    /// results: 1650 differential gain, 93.16 dB CMRR, 0.18–70.2 Hz
    /// bandwidth and a mains attenuation below −12.6 dB (500 Hz sampling).
    pub fn table1() -> Self {
        FrontEndSpec {
            instrument_gain: 22.0,
            voltage_gain: 75.0,
            f_ch: 0.1833,
            f_cl: 69.19,
            f_0: 49.79,
            notch_q: 30.0,
            cmrr_db: 93.16,
            lift_bias: 1.65,
            supply_clip: (0.0, 3.3),
            stages: DEFAULT_STAGES.to_vec(),
        }
    }

    /// Spec derived from component values, with the default notch Q.
    pub fn from_components(c: &ComponentValues) -> Result<Self> {
        c.validate()?;
        let spec = FrontEndSpec {
            instrument_gain: instrument_gain(c)?,
            voltage_gain: voltage_gain(c)?,
            f_ch: highpass_cutoff(c.c2, c.r_hp)?,
            f_cl: lowpass_cutoff(c.c3, c.r15)?,
            f_0: notch_center(c.r31, c.c5, c.r27, c.c7)?,
            notch_q: DEFAULT_NOTCH_Q,
            ..FrontEndSpec::table1()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn chain_gain(&self) -> f64 {
        self.instrument_gain * self.voltage_gain
    }

    /// Linear factor applied to the common-mode input.
    pub fn common_mode_factor(&self) -> f64 {
        10f64.powf(-self.cmrr_db / 20.0)
    }

    pub fn without_stage(&self, kind: StageKind) -> Self {
        let mut s = self.clone();
        s.stages.retain(|&k| k != kind);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fin = |v: f64| v.is_finite();
        if !(self.instrument_gain > 0.0 && self.voltage_gain > 0.0)
            || !fin(self.instrument_gain * self.voltage_gain)
        {
            return Err(Error::invalid("gains must be positive"));
        }
        if !(self.f_ch > 0.0 && self.f_ch < self.f_cl && fin(self.f_cl)) {
            return Err(Error::invalid(format!(
                "need 0 < f_ch < f_cl, got f_ch={} f_cl={}",
                self.f_ch, self.f_cl
            )));
        }
        if !(self.f_ch < self.f_0 && self.f_0 < self.f_cl) {
            return Err(Error::invalid(format!(
                "need f_ch < f_0 < f_cl, got f_0={}",
                self.f_0
            )));
        }
        if !(self.notch_q > 0.0 && fin(self.notch_q)) {
            return Err(Error::invalid("notch_q must be positive"));
        }
        if !fin(self.cmrr_db) {
            return Err(Error::invalid("cmrr_db must be finite"));
        }
        if !(0.0..=3.3).contains(&self.lift_bias) {
            return Err(Error::invalid(format!(
                "lift_bias must lie in [0, 3.3] V, got {}",
                self.lift_bias
            )));
        }
        let (lo, hi) = self.supply_clip;
        if !(lo < hi && fin(lo) && fin(hi)) {
            return Err(Error::invalid("supply_clip must be an increasing range"));
        }
        Ok(())
    }
}

/// A discretized first- or second-order section in transposed direct
/// form II: `y = b0·x + s0; s0 = b1·x − a1·y + s1; s1 = b2·x − a2·y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedFilter {
    pub kind: StageKind,
    pub b: [f64; 3],
    pub a: [f64; 2],
    state: [f64; 2],
    pub sample_rate: f64,
}

impl DiscretizedFilter {
    fn check_frequency(freq: f64, sample_rate: f64) -> Result<()> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(freq > 0.0 && freq < sample_rate / 2.0) {
            return Err(Error::invalid(format!(
                "characteristic frequency {freq} Hz must lie in (0, {}) Hz",
                sample_rate / 2.0
            )));
        }
        Ok(())
    }

    /// First-order low-pass, −3 dB at `cutoff`.
    pub fn lowpass(cutoff: f64, sample_rate: f64) -> Result<Self> {
        Self::check_frequency(cutoff, sample_rate)?;
        let k = (PI * cutoff / sample_rate).tan();
        let g = k / (1.0 + k);
        Ok(Self::from_coeffs(
            StageKind::Lowpass,
            [g, g, 0.0],
            [(k - 1.0) / (k + 1.0), 0.0],
            sample_rate,
        ))
    }

    /// First-order high-pass, −3 dB at `cutoff`.
    pub fn highpass(cutoff: f64, sample_rate: f64) -> Result<Self> {
        Self::check_frequency(cutoff, sample_rate)?;
        let k = (PI * cutoff / sample_rate).tan();
        let g = 1.0 / (1.0 + k);
        Ok(Self::from_coeffs(
            StageKind::Highpass,
            [g, -g, 0.0],
            [(k - 1.0) / (k + 1.0), 0.0],
            sample_rate,
        ))
    }

    /// Second-order band-reject with a transmission zero at `center`.
    pub fn notch(center: f64, q: f64, sample_rate: f64) -> Result<Self> {
        Self::check_frequency(center, sample_rate)?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::invalid(format!("notch Q must be positive, got {q}")));
        }
        let w0 = 2.0 * PI * center / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        let c = -2.0 * w0.cos() / a0;
        Ok(Self::from_coeffs(
            StageKind::Notch,
            [1.0 / a0, c, 1.0 / a0],
            [c, (1.0 - alpha) / a0],
            sample_rate,
        ))
    }

    fn from_coeffs(kind: StageKind, b: [f64; 3], a: [f64; 2], sample_rate: f64) -> Self {
        DiscretizedFilter {
            kind,
            b,
            a,
            state: [0.0; 2],
            sample_rate,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.state[0];
        self.state[0] = self.b[1] * x - self.a[0] * y + self.state[1];
        self.state[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }

    /// H(e^{jω}) at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * freq / self.sample_rate);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }

    pub fn magnitude_db(&self, freq: f64) -> f64 {
        20.0 * self.response(freq).norm().log10()
    }

    /// Roots of `z² + a1·z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Discretizes one stage of `spec` at `sample_rate`.
pub fn discretize(kind: StageKind, spec: &FrontEndSpec, sample_rate: f64) -> Result<DiscretizedFilter> {
    match kind {
        StageKind::Highpass => DiscretizedFilter::highpass(spec.f_ch, sample_rate),
        StageKind::Lowpass => DiscretizedFilter::lowpass(spec.f_cl, sample_rate),
        StageKind::Notch => DiscretizedFilter::notch(spec.f_0, spec.notch_q, sample_rate),
    }
}

/// Stateful sample-by-sample model of the whole chain.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    spec: FrontEndSpec,
    filters: Vec<DiscretizedFilter>,
    gain: f64,
    cm_factor: f64,
}

impl FrontEnd {
    pub fn new(spec: &FrontEndSpec, sample_rate: f64) -> Result<Self> {
        spec.validate()?;
        let filters = spec
            .stages
            .iter()
            .map(|&k| discretize(k, spec, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrontEnd {
            spec: spec.clone(),
            filters,
            gain: spec.chain_gain(),
            cm_factor: spec.common_mode_factor(),
        })
    }

    /// Amplified and filtered output before lifting and clipping, volts.
    #[inline]
    pub fn process_ac(&mut self, differential_v: f64, common_mode_v: f64) -> f64 {
        let mut x = differential_v + common_mode_v * self.cm_factor;
        for f in &mut self.filters {
            x = f.process(x);
        }
        self.gain * x
    }

    /// Lifted and rail-clipped output; the flag reports saturation.
    #[inline]
    pub fn process(&mut self, differential_v: f64, common_mode_v: f64) -> (f64, bool) {
        let v = self.spec.lift_bias + self.process_ac(differential_v, common_mode_v);
        let (lo, hi) = self.spec.supply_clip;
        (v.clamp(lo, hi), !(lo..=hi).contains(&v))
    }

    pub fn filters(&self) -> &[DiscretizedFilter] {
        &self.filters
    }

    /// Analytic gain of the discretized chain at `freq`.
    pub fn response(&self, freq: f64) -> Complex64 {
        self.filters
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, f| acc * f.response(freq))
    }
}

/// Front-end output frame (volts) plus whether any sample hit a rail.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndOutput {
    pub frame: SampleFrame,
    pub saturated: bool,
}

fn to_volts_factor(unit: Unit) -> Result<f64> {
    match unit {
        Unit::Millivolts => Ok(1e-3),
        Unit::Volts => Ok(1.0),
        Unit::Codes => Err(Error::invalid("front end expects voltages, not ADC codes")),
    }
}

/// Runs a source through the chain: common-mode attenuation, filter stages
/// in `spec.stages` order, gain, lift and clipping.
pub fn apply_frontend(sig: &SourceSignal, spec: &FrontEndSpec, sample_rate: f64) -> Result<FrontEndOutput> {
    let diff = &sig.differential;
    let cm = &sig.common_mode;
    if diff.sample_rate != sample_rate || cm.sample_rate != sample_rate || diff.len() != cm.len() {
        return Err(Error::invalid(
            "source frames must match each other and the requested sample rate",
        ));
    }
    let kd = to_volts_factor(diff.unit)?;
    let kc = to_volts_factor(cm.unit)?;
    let mut fe = FrontEnd::new(spec, sample_rate)?;
    let mut saturated = false;
    let values = diff
        .values
        .iter()
        .zip(&cm.values)
        .map(|(&d, &c)| {
            let (v, sat) = fe.process(d * kd, c * kc);
            saturated |= sat;
            v
        })
        .collect();
    let frame = SampleFrame::new(sample_rate, Unit::Volts, values)?.with_start_time(diff.start_time);
    Ok(FrontEndOutput { frame, saturated })
}

/// Bench metrics of the chain, field names as emitted by `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub differential_gain: f64,
    pub common_mode_gain: f64,
    pub cmrr_db: f64,
    pub bandwidth_low: f64,
    pub bandwidth_high: f64,
    pub bw: f64,
    pub mains_attenuation_db: f64,
    /// Declared, ohms.
    pub input_impedance: f64,
    /// Equivalent input noise, volts.
    pub equiv_input_noise: f64,
}

/// Probe settings for [`measure_metrics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSetup {
    /// Probe sine amplitude at the input, volts.
    pub probe_amplitude: f64,
    pub midband_freq: f64,
    pub mains_freq: f64,
    pub reference_freq: f64,
    /// Lowest and highest frequency scanned for the −3 dB points. The upper
    /// bound is additionally capped just below Nyquist.
    pub scan_min: f64,
    pub scan_max: f64,
    /// Input-referred white noise used for the shorted-input run, volts rms.
    pub noise_sigma: f64,
    pub noise_duration: f64,
    pub seed: u64,
    pub input_impedance: f64,
}

impl Default for MetricsSetup {
    fn default() -> Self {
        MetricsSetup {
            probe_amplitude: 0.5e-3,
            midband_freq: 10.0,
            mains_freq: 50.0,
            reference_freq: 20.0,
            scan_min: 0.01,
            scan_max: 1000.0,
            noise_sigma: 4e-6,
            noise_duration: 10.0,
            seed: 0,
            input_impedance: 13.2e6,
        }
    }
}

#[derive(Clone, Copy)]
enum Probe {
    Differential,
    CommonMode,
}

/// Lock-in amplitude of the steady-state response to a sine probe.
fn probe_gain(spec: &FrontEndSpec, fs: f64, freq: f64, probe: Probe, amplitude: f64) -> Result<f64> {
    let mut fe = FrontEnd::new(spec, fs)?;
    let settle_s = 10.0 / (2.0 * PI * spec.f_ch) + 2.0;
    let settle = (settle_s * fs).ceil() as usize;
    let cycles = (2.0 * freq).ceil().max(3.0);
    let window = (cycles * fs / freq).round() as usize;
    let w = 2.0 * PI * freq / fs;
    let (mut i_acc, mut q_acc) = (0.0, 0.0);
    for n in 0..settle + window {
        let x = amplitude * (w * n as f64).sin();
        let y = match probe {
            Probe::Differential => fe.process_ac(x, 0.0),
            Probe::CommonMode => fe.process_ac(0.0, x),
        };
        if n >= settle {
            i_acc += y * (w * n as f64).cos();
            q_acc += y * (w * n as f64).sin();
        }
    }
    Ok(2.0 * (i_acc * i_acc + q_acc * q_acc).sqrt() / window as f64 / amplitude)
}

/// Bisects for the frequency where `gain(f) == threshold` between a
/// passing and a failing frequency, on a log scale.
fn bisect_crossing(
    mut pass: f64,
    mut fail: f64,
    threshold: f64,
    mut gain: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    for _ in 0..40 {
        let mid = (pass * fail).sqrt();
        if gain(mid)? >= threshold {
            pass = mid;
        } else {
            fail = mid;
        }
        if (pass / fail).ln().abs() < 1e-6 {
            break;
        }
    }
    Ok((pass * fail).sqrt())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Measures the bench metrics by driving the simulated chain with probes.
///
/// `bandwidth_low`/`bandwidth_high` are the lowest and highest frequencies
/// at which the gain is still within 3 dB of the mid-band gain, so a notch
/// inside the band does not truncate it.
pub fn measure_metrics(spec: &FrontEndSpec, sample_rate: f64, setup: &MetricsSetup) -> Result<MetricsReport> {
    spec.validate()?;
    let nyquist = sample_rate / 2.0;
    for (name, f) in [
        ("midband_freq", setup.midband_freq),
        ("mains_freq", setup.mains_freq),
        ("reference_freq", setup.reference_freq),
    ] {
        if !(f > 0.0 && f < nyquist) {
            return Err(Error::invalid(format!("{name} {f} Hz is outside (0, Nyquist)")));
        }
    }
    if !(setup.scan_min > 0.0 && setup.scan_min < setup.midband_freq && setup.probe_amplitude > 0.0) {
        return Err(Error::invalid("scan_min must lie in (0, midband) and the probe be positive"));
    }
    let amp = setup.probe_amplitude;
    let diff_gain = |f: f64| probe_gain(spec, sample_rate, f, Probe::Differential, amp);

    let a_d = diff_gain(setup.midband_freq)?;
    let a_c = probe_gain(spec, sample_rate, setup.midband_freq, Probe::CommonMode, amp)?;
    let threshold = a_d / SQRT_2;

    let low_grid = log_grid(setup.scan_min, setup.midband_freq, 25);
    let mut f_low = setup.scan_min;
    let mut prev = None;
    for &f in &low_grid {
        if diff_gain(f)? >= threshold {
            if let Some(p) = prev {
                f_low = bisect_crossing(f, p, threshold, diff_gain)?;
            }
            break;
        }
        prev = Some(f);
    }

    let top = setup.scan_max.min(0.98 * nyquist);
    let high_grid = log_grid(setup.midband_freq, top, 40);
    let mut f_high = top;
    let mut prev = None;
    for &f in high_grid.iter().rev() {
        if diff_gain(f)? >= threshold {
            if let Some(p) = prev {
                f_high = bisect_crossing(f, p, threshold, diff_gain)?;
            }
            break;
        }
        prev = Some(f);
    }

    let a_mains = diff_gain(setup.mains_freq)?;
    let a_ref = diff_gain(setup.reference_freq)?;

    let u_omax = shorted_input_peak(spec, sample_rate, setup)?;

    Ok(MetricsReport {
        differential_gain: a_d,
        common_mode_gain: a_c,
        cmrr_db: 20.0 * (a_d / a_c).log10(),
        bandwidth_low: f_low,
        bandwidth_high: f_high,
        bw: f_high - f_low,
        mains_attenuation_db: 20.0 * (a_mains / a_ref).log10(),
        input_impedance: setup.input_impedance,
        equiv_input_noise: u_omax / a_d,
    })
}

/// Peak output deviation from the lift bias with zero differential input
/// and white input-referred noise.
fn shorted_input_peak(spec: &FrontEndSpec, fs: f64, setup: &MetricsSetup) -> Result<f64> {
    if setup.noise_sigma == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, setup.noise_sigma)
        .map_err(|e| Error::invalid(format!("noise_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut fe = FrontEnd::new(spec, fs)?;
    let settle = (2.0 * fs) as usize;
    let n = settle + (setup.noise_duration * fs).round() as usize;
    let mut peak: f64 = 0.0;
    for i in 0..n {
        let y = fe.process_ac(normal.sample(&mut rng), 0.0);
        if i >= settle {
            peak = peak.max(y.abs());
        }
    }
    Ok(peak)
}

/// Analytic magnitude response (dB) of the discretized chain.
pub fn frequency_response(spec: &FrontEndSpec, sample_rate: f64, freqs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let fe = FrontEnd::new(spec, sample_rate)?;
    Ok(freqs
        .iter()
        .map(|&f| (f, 20.0 * fe.response(f).norm().log10()))
        .collect())
}

/// Writes `freq_hz,mag_db` rows.
pub fn write_response_csv<W: Write>(rows: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["freq_hz", "mag_db"]).map_err(err)?;
    for &(f, db) in rows {
        w.write_record([crate::frame::format_sig(f, 9), crate::frame::format_sig(db, 9)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Log-spaced frequency grid from `lo` to `hi`, inclusive.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    log_grid(lo, hi, n.max(2))
}
