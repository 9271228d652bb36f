use std::sync::Arc;
use std::thread;

use ecg_monitor::acquisition::{
    codes_to_frame, dequantize, dequantize_frame, quantize, quantize_frame, AdcCode, AdcConfig, PingPongBuffer,
    SharedPingPong,
};
use ecg_monitor::{SampleFrame, Unit};
use proptest::prelude::*;

fn drain_all(input: &[AdcCode], cap: usize) -> (Vec<AdcCode>, Vec<u64>) {
    let mut buf = PingPongBuffer::new(cap).unwrap();
    let mut out = Vec::new();
    let mut seqs = Vec::new();
    for &c in input {
        if buf.push_sample(c).is_some() {
            let h = buf.take_ready_half().unwrap();
            seqs.push(h.seq);
            out.extend(h.codes);
        }
    }
    if buf.flush().is_some() {
        let h = buf.take_ready_half().unwrap();
        seqs.push(h.seq);
        out.extend(h.codes);
    }
    (out, seqs)
}

#[test]
fn every_code_survives_dequantize_quantize() {
    let cfg = AdcConfig::default();
    for c in 0..=cfg.max_code() {
        assert_eq!(quantize(dequantize(AdcCode(c), &cfg).unwrap(), &cfg), AdcCode(c));
    }
    assert!(dequantize(AdcCode(4096), &cfg).is_err());
}

#[test]
fn quantizer_clamps_out_of_range() {
    let cfg = AdcConfig::default();
    assert_eq!(quantize(-1.0, &cfg), AdcCode(0));
    assert_eq!(quantize(10.0, &cfg), AdcCode(4095));
    assert_eq!(quantize(1.65, &cfg), AdcCode(2048));
}

#[test]
fn frame_conversion_round_trip() {
    let cfg = AdcConfig::default();
    let f = SampleFrame::new(500.0, Unit::Volts, vec![0.0, 0.5, 1.65, 3.3]).unwrap();
    let codes = quantize_frame(&f, &cfg).unwrap();
    let cf = codes_to_frame(&codes, 500.0).unwrap();
    assert_eq!(cf.unit, Unit::Codes);
    let back = dequantize_frame(&cf, &cfg).unwrap();
    for (a, b) in f.values.iter().zip(&back.values) {
        assert!((a - b).abs() <= 0.5 * cfg.vref / 4095.0 + 1e-12);
    }
    let mv = SampleFrame::new(500.0, Unit::Millivolts, vec![1.0]).unwrap();
    assert!(quantize_frame(&mv, &cfg).is_err());
}

#[test]
fn stall_drops_exactly_one_half() {
    let cap = 16;
    let mut buf = PingPongBuffer::new(cap).unwrap();
    let mut seqs = Vec::new();
    let mut out = Vec::new();
    for n in 0..(8 * cap) as u16 {
        buf.push_sample(AdcCode(n));
        // Consumer asleep through the 3rd and 4th fills.
        let asleep = (2 * cap..4 * cap - 1).contains(&(n as usize));
        if !asleep {
            if let Some(h) = buf.take_ready_half() {
                seqs.push(h.seq);
                out.extend(h.codes);
            }
        }
    }
    assert!(buf.overrun());
    let gaps: Vec<_> = seqs.windows(2).filter(|w| w[1] != w[0] + 1).collect();
    assert_eq!(gaps.len(), 1, "{seqs:?}");
    assert_eq!(out.len(), 7 * cap);
}

#[test]
fn threaded_producer_consumer_loses_nothing() {
    let shared = Arc::new(SharedPingPong::new(64).unwrap());
    let input: Vec<AdcCode> = (0..10_000u32).map(|n| AdcCode((n * 37 % 4096) as u16)).collect();
    let producer = {
        let shared = Arc::clone(&shared);
        let input = input.clone();
        thread::spawn(move || {
            for c in input {
                shared.push_blocking(c);
            }
            shared.close();
        })
    };
    let mut out = Vec::new();
    let mut last_seq = None;
    while let Some((half, overrun)) = shared.wait_take(None) {
        assert!(!overrun);
        if let Some(prev) = last_seq {
            assert_eq!(half.seq, prev + 1);
        }
        last_seq = Some(half.seq);
        out.extend(half.codes);
    }
    producer.join().unwrap();
    assert_eq!(out, input);
    assert_eq!(shared.totals(), (10_000, 10_000));
}

proptest! {
    #[test]
    fn prompt_consumer_reassembles_input(cap in 1usize..300, codes in prop::collection::vec(0u16..4096, 0..2000)) {
        let input: Vec<AdcCode> = codes.into_iter().map(AdcCode).collect();
        let (out, seqs) = drain_all(&input, cap);
        prop_assert_eq!(out, input);
        prop_assert!(seqs.iter().enumerate().all(|(i, &s)| s == i as u64));
    }

    #[test]
    fn quantize_is_monotone(a in -1.0f64..4.5, b in -1.0f64..4.5) {
        let cfg = AdcConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo, &cfg) <= quantize(hi, &cfg));
    }

    #[test]
    fn quantize_error_is_half_lsb(v in 0.0f64..3.3) {
        let cfg = AdcConfig::default();
        let back = dequantize(quantize(v, &cfg), &cfg).unwrap();
        prop_assert!((back - v).abs() <= 0.5 * 3.3 / 4095.0 + 1e-12);
    }
}
