use ecg_monitor::signal::{add_noise, generate_ecg, generate_sine, EcgTemplateParams, NoiseConfig};
use proptest::prelude::*;

// Naive DFT magnitude at an arbitrary frequency, mean removed.
fn dft_mag(values: &[f64], fs: f64, f: f64) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &v) in values.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * f * n as f64 / fs;
        re += (v - mean) * ph.cos();
        im -= (v - mean) * ph.sin();
    }
    (re * re + im * im).sqrt()
}

fn r_peaks(values: &[f64], threshold: f64) -> usize {
    values
        .windows(3)
        .filter(|w| w[1] > threshold && w[1] >= w[0] && w[1] > w[2])
        .count()
}

#[test]
fn fundamental_line_sits_at_beat_rate() {
    let fs = 500.0;
    let ecg = generate_ecg(&EcgTemplateParams::default(), 72.0, fs, 10.0).unwrap();
    let grid: Vec<f64> = (3..=60).map(|k| k as f64 * 0.05).collect();
    let mags: Vec<f64> = grid.iter().map(|&f| dft_mag(&ecg.values, fs, f)).collect();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let first = grid
        .iter()
        .zip(&mags)
        .find(|(_, &m)| m > 0.5 * peak)
        .map(|(&f, _)| f)
        .unwrap();
    assert!((first - 1.2).abs() <= 0.1, "lowest strong line at {first} Hz");
    // Between harmonics the spectrum is near empty.
    assert!(dft_mag(&ecg.values, fs, 1.8) < 0.05 * peak);
}

#[test]
fn default_template_r_peak_is_one_millivolt() {
    let ecg = generate_ecg(&EcgTemplateParams::default(), 60.0, 1000.0, 3.0).unwrap();
    let (lo, hi) = ecg.min_max().unwrap();
    assert!((hi - 1.0).abs() < 0.02, "peak {hi}");
    assert!(lo > -0.3);
}

#[test]
fn noise_changes_with_seed_only() {
    let base = generate_sine(5.0, 1.0, 500.0, 2.0).unwrap();
    let cfg = NoiseConfig {
        emg_sigma: 0.1,
        mains_amplitude: 0.2,
        rng_seed: 11,
        ..NoiseConfig::default()
    };
    let a = add_noise(&base, &cfg).unwrap();
    let b = add_noise(&base, &cfg).unwrap();
    let c = add_noise(&base, &NoiseConfig { rng_seed: 12, ..cfg }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.differential.values, c.differential.values);
}

#[test]
fn mains_component_has_requested_amplitude() {
    let zero = generate_sine(0.0, 0.0, 500.0, 4.0).unwrap();
    let cfg = NoiseConfig {
        mains_amplitude: 0.3,
        ..NoiseConfig::default()
    };
    let out = add_noise(&zero, &cfg).unwrap();
    let amp = 2.0 * dft_mag(&out.differential.values, 500.0, 50.0) / out.differential.len() as f64;
    assert!((amp - 0.3).abs() < 1e-3, "{amp}");
}

proptest! {
    #[test]
    fn sine_rms_is_amplitude_over_root_two(freq in 0.5f64..100.0, amp in 0.01f64..5.0) {
        let s = generate_sine(freq, amp, 500.0, 10.0).unwrap();
        let want = amp / 2f64.sqrt();
        prop_assert!((s.rms() - want).abs() <= 0.01 * want);
    }

    #[test]
    fn r_peak_count_matches_beats(bpm in 30.0f64..200.0, duration in 3.0f64..12.0) {
        let fs = 500.0;
        let period = 60.0 / bpm;
        let r_center = EcgTemplateParams::default().r.center;
        // Beat k peaks at (k + r_center)·period; the last sample is at duration − 1/fs.
        let last = duration - 1.0 / fs;
        let margin = 3.0 / fs;
        let frac = (last / period - r_center).rem_euclid(1.0) * period;
        prop_assume!(frac > margin && period - frac > margin);
        let want = ((last / period - r_center).floor() + 1.0).max(0.0) as usize;
        let ecg = generate_ecg(&EcgTemplateParams::default(), bpm, fs, duration).unwrap();
        prop_assert_eq!(r_peaks(&ecg.values, 0.5), want);
    }

    #[test]
    fn ecg_scales_linearly(k in 0.1f64..4.0) {
        let p = EcgTemplateParams::default();
        let a = generate_ecg(&p, 75.0, 250.0, 2.0).unwrap();
        let b = generate_ecg(&p.scaled(k), 75.0, 250.0, 2.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x * k - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
