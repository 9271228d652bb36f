//! Desk-scale model of a portable ECG monitor.
//!
//! The signal path mirrors the device: synthetic electrode signals
//! ([`signal`]) pass through the analog front end ([`frontend`]), are
//! digitized into a ping-pong DMA buffer ([`acquisition`]), filtered and
//! scanned for rising edges ([`dsp`]), drawn on a monochrome display model
//! ([`render`]) and shipped as JSON records with threshold alerts
//! ([`telemetry`]). [`pipeline`] wires the stages together from a
//! [`config::PipelineConfig`].

pub mod acquisition;
pub mod config;
pub mod dsp;
pub mod error;
pub mod frame;
pub mod frontend;
pub mod pipeline;
pub mod render;
pub mod signal;
pub mod telemetry;

pub use error::{Error, Result};
pub use frame::{SampleFrame, Unit};
