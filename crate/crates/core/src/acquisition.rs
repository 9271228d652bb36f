//! Timer-paced ADC and the DMA ping-pong double buffer.
//!
//! The writer fills one half while the consumer owns the other. Each
//! completed half produces a [`ReadyEvent`] with a gap-free sequence number
//! unless the consumer falls behind, in which case the older pending half is
//! overwritten and `overrun` is latched.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{SampleFrame, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    pub resolution_bits: u32,
    pub vref: f64,
    pub sample_rate: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig {
            resolution_bits: 12,
            vref: 3.3,
            sample_rate: 500.0,
        }
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.resolution_bits) {
            return Err(Error::invalid(format!(
                "resolution_bits must be 1..=16, got {}",
                self.resolution_bits
            )));
        }
        if !(self.vref > 0.0 && self.vref.is_finite()) {
            return Err(Error::invalid("vref must be positive"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.resolution_bits) - 1) as u16
    }
}

/// A single converter output word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdcCode(pub u16);

/// `clamp(round(v/vref × (2^bits − 1)), 0, 2^bits − 1)`, ties away from zero.
pub fn quantize(v: f64, cfg: &AdcConfig) -> AdcCode {
    let max = cfg.max_code();
    if v.is_nan() {
        return AdcCode(0);
    }
    let code = (v / cfg.vref * max as f64).round();
    AdcCode(code.clamp(0.0, max as f64) as u16)
}

pub fn dequantize(c: AdcCode, cfg: &AdcConfig) -> Result<f64> {
    let max = cfg.max_code();
    if c.0 > max {
        return Err(Error::invalid(format!(
            "code {} out of range for {} bits",
            c.0, cfg.resolution_bits
        )));
    }
    Ok(c.0 as f64 / max as f64 * cfg.vref)
}

/// Quantizes every sample of a volts frame.
pub fn quantize_frame(frame: &SampleFrame, cfg: &AdcConfig) -> Result<Vec<AdcCode>> {
    if frame.unit != Unit::Volts {
        return Err(Error::invalid("ADC input must be in volts"));
    }
    Ok(frame.values.iter().map(|&v| quantize(v, cfg)).collect())
}

pub fn codes_to_frame(codes: &[AdcCode], sample_rate: f64) -> Result<SampleFrame> {
    SampleFrame::new(
        sample_rate,
        Unit::Codes,
        codes.iter().map(|c| c.0 as f64).collect(),
    )
}

pub fn dequantize_frame(frame: &SampleFrame, cfg: &AdcConfig) -> Result<SampleFrame> {
    if frame.unit != Unit::Codes {
        return Err(Error::invalid("expected a frame of ADC codes"));
    }
    let values = frame
        .values
        .iter()
        .map(|&c| {
            if c < 0.0 || c.fract() != 0.0 || c > u16::MAX as f64 {
                return Err(Error::invalid(format!("{c} is not an ADC code")));
            }
            dequantize(AdcCode(c as u16), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleFrame {
        unit: Unit::Volts,
        ..frame.with_values(values)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadyEvent {
    pub half: u8,
    pub seq: u64,
}

/// A consumed half, copied out of the buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadyHalf {
    pub half: u8,
    pub seq: u64,
    /// Write generation of the half when it completed.
    pub generation: u64,
    pub codes: Vec<AdcCode>,
}

impl ReadyHalf {
    pub fn to_frame(&self, sample_rate: f64) -> Result<SampleFrame> {
        codes_to_frame(&self.codes, sample_rate)
    }
}

#[derive(Debug, Clone)]
struct Pending {
    seq: u64,
    generation: u64,
    len: usize,
}

/// Two equal halves with a single writer position.
#[derive(Debug, Clone)]
pub struct PingPongBuffer {
    half_capacity: usize,
    halves: [Vec<AdcCode>; 2],
    write_index: usize,
    active_half: u8,
    /// Incremented each time the writer starts filling a half.
    generation: [u64; 2],
    pending: [Option<Pending>; 2],
    events: VecDeque<ReadyEvent>,
    next_seq: u64,
    overrun: bool,
    total_written: u64,
    total_consumed: u64,
}

pub const DEFAULT_HALF_CAPACITY: usize = 512;

impl PingPongBuffer {
    pub fn new(half_capacity: usize) -> Result<Self> {
        if half_capacity == 0 {
            return Err(Error::invalid("half capacity must be at least 1"));
        }
        Ok(PingPongBuffer {
            half_capacity,
            halves: [
                vec![AdcCode(0); half_capacity],
                vec![AdcCode(0); half_capacity],
            ],
            write_index: 0,
            active_half: 0,
            generation: [1, 0],
            pending: [None, None],
            events: VecDeque::new(),
            next_seq: 0,
            overrun: false,
            total_written: 0,
            total_consumed: 0,
        })
    }

    pub fn half_capacity(&self) -> usize {
        self.half_capacity
    }

    pub fn active_half(&self) -> u8 {
        self.active_half
    }

    pub fn write_index(&self) -> usize {
        self.write_index
    }

    pub fn overrun(&self) -> bool {
        self.overrun
    }

    pub fn clear_overrun(&mut self) {
        self.overrun = false;
    }

    pub fn total_written(&self) -> u64 {
        self.total_written
    }

    pub fn total_consumed(&self) -> u64 {
        self.total_consumed
    }

    pub fn generation(&self, half: u8) -> u64 {
        self.generation[half as usize]
    }

    /// Events emitted so far and not yet drained.
    pub fn drain_events(&mut self) -> Vec<ReadyEvent> {
        self.events.drain(..).collect()
    }

    pub fn has_ready(&self) -> bool {
        self.pending.iter().any(Option::is_some)
    }

    /// True if the next push completes the active half while the other half
    /// is still waiting for the consumer.
    pub fn next_push_overruns(&self) -> bool {
        self.write_index + 1 == self.half_capacity && self.inactive_pending()
    }

    /// The half not being written is still waiting for the consumer.
    pub fn inactive_pending(&self) -> bool {
        self.pending[1 - self.active_half as usize].is_some()
    }

    /// Stores one sample. Returns the event when this sample completes a half.
    pub fn push_sample(&mut self, c: AdcCode) -> Option<ReadyEvent> {
        let h = self.active_half as usize;
        self.halves[h][self.write_index] = c;
        self.write_index += 1;
        self.total_written += 1;
        if self.write_index == self.half_capacity {
            Some(self.complete_active())
        } else {
            None
        }
    }

    /// Hands out the partially filled active half, if it holds any samples.
    /// Used at end of stream.
    pub fn flush(&mut self) -> Option<ReadyEvent> {
        (self.write_index > 0).then(|| self.complete_active())
    }

    fn complete_active(&mut self) -> ReadyEvent {
        let h = self.active_half as usize;
        let other = 1 - h;
        let ev = ReadyEvent {
            half: h as u8,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.pending[h] = Some(Pending {
            seq: ev.seq,
            generation: self.generation[h],
            len: self.write_index,
        });
        if self.pending[other].take().is_some() {
            // The consumer still holds the previous half: DMA wraps onto it.
            self.overrun = true;
        }
        self.events.push_back(ev);
        self.active_half = other as u8;
        self.write_index = 0;
        self.generation[other] += 1;
        ev
    }

    /// Copies out the newest completed half and releases it to the writer.
    pub fn take_ready_half(&mut self) -> Option<ReadyHalf> {
        let h = (0..2)
            .filter(|&i| self.pending[i].is_some())
            .max_by_key(|&i| self.pending[i].as_ref().map(|p| p.seq))?;
        let p = self.pending[h].take()?;
        let codes = self.halves[h][..p.len].to_vec();
        self.total_consumed += p.len as u64;
        Some(ReadyHalf {
            half: h as u8,
            seq: p.seq,
            generation: p.generation,
            codes,
        })
    }
}

#[derive(Debug)]
struct SharedState {
    buf: PingPongBuffer,
    closed: bool,
}

/// [`PingPongBuffer`] shared between one producer and one consumer thread.
#[derive(Debug)]
pub struct SharedPingPong {
    state: Mutex<SharedState>,
    ready: Condvar,
    released: Condvar,
}

impl SharedPingPong {
    pub fn new(half_capacity: usize) -> Result<Self> {
        Ok(SharedPingPong {
            state: Mutex::new(SharedState {
                buf: PingPongBuffer::new(half_capacity)?,
                closed: false,
            }),
            ready: Condvar::new(),
            released: Condvar::new(),
        })
    }

    fn lock(&self) -> MutexGuard<'_, SharedState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Free-running write: overruns if the consumer is late.
    pub fn push(&self, c: AdcCode) -> Option<ReadyEvent> {
        let ev = self.lock().buf.push_sample(c);
        if ev.is_some() {
            self.ready.notify_all();
        }
        ev
    }

    /// Waits for the consumer instead of overrunning.
    pub fn push_blocking(&self, c: AdcCode) -> Option<ReadyEvent> {
        let mut st = self.lock();
        while st.buf.next_push_overruns() && !st.closed {
            st = self.released.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        let ev = st.buf.push_sample(c);
        drop(st);
        if ev.is_some() {
            self.ready.notify_all();
        }
        ev
    }

    /// Flushes the partial half (waiting for the consumer if needed) and
    /// marks the stream finished.
    pub fn close(&self) {
        let mut st = self.lock();
        while st.buf.write_index() > 0 && st.buf.inactive_pending() {
            st = self.released.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.buf.flush();
        st.closed = true;
        drop(st);
        self.ready.notify_all();
        self.released.notify_all();
    }

    /// Blocks until a half is ready (returns it with the current overrun
    /// flag) or the stream is closed and drained (returns `None`).
    pub fn wait_take(&self, timeout: Option<Duration>) -> Option<(ReadyHalf, bool)> {
        let mut st = self.lock();
        loop {
            if let Some(half) = st.buf.take_ready_half() {
                let overrun = st.buf.overrun();
                drop(st);
                self.released.notify_all();
                return Some((half, overrun));
            }
            if st.closed {
                return None;
            }
            st = match timeout {
                Some(t) => {
                    let (g, res) = self.ready.wait_timeout(st, t).unwrap_or_else(|e| e.into_inner());
                    if res.timed_out() && !g.buf.has_ready() {
                        return None;
                    }
                    g
                }
                None => self.ready.wait(st).unwrap_or_else(|e| e.into_inner()),
            };
        }
    }

    pub fn overrun(&self) -> bool {
        self.lock().buf.overrun()
    }

    pub fn totals(&self) -> (u64, u64) {
        let st = self.lock();
        (st.buf.total_written(), st.buf.total_consumed())
    }
}
