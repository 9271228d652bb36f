//! The fixed-rate sample frame that flows between every pipeline stage,
//! plus its `time,value` CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit of the values carried by a [`SampleFrame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Volts,
    Millivolts,
    /// Raw ADC codes stored as floats.
    Codes,
}

/// A uniformly sampled time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    pub sample_rate: f64,
    pub start_time: f64,
    pub unit: Unit,
    pub values: Vec<f64>,
}

impl SampleFrame {
    pub fn new(sample_rate: f64, unit: Unit, values: Vec<f64>) -> Result<Self> {
        let frame = SampleFrame {
            sample_rate,
            start_time: 0.0,
            unit,
            values,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if !self.start_time.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at sample {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of sample `n` in seconds.
    pub fn time_at(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> SampleFrame {
        SampleFrame {
            sample_rate: self.sample_rate,
            start_time: self.start_time,
            unit: self.unit,
            values,
        }
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Writes `time,value` rows with nine significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["time", "value"]).map_err(csv_err)?;
        for (n, v) in self.values.iter().enumerate() {
            w.write_record([format_sig(self.time_at(n), 9), format_sig(*v, 9)])
                .map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::Parse(format!("csv flush: {e}")))?;
        Ok(())
    }

    /// Reads a `time,value` CSV. The sample rate is recovered from the time
    /// column; `fallback_rate` is used when there are fewer than two rows.
    pub fn read_csv<R: Read>(reader: R, unit: Unit, fallback_rate: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let line = i + 2;
            if rec.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {line}: expected 2 columns, found {}",
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {line}: {s:?}: {e}")))
            };
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        let sample_rate = if times.len() >= 2 {
            let span = times[times.len() - 1] - times[0];
            if span <= 0.0 {
                return Err(Error::Parse("time column is not increasing".into()));
            }
            let rate = (times.len() - 1) as f64 / span;
            // The time column only carries nine significant digits.
            let rounded = rate.round();
            if (rate - rounded).abs() <= 1e-6 * rate {
                rounded
            } else {
                rate
            }
        } else {
            fallback_rate
        };
        let start_time = times.first().copied().unwrap_or(0.0);
        Ok(SampleFrame::new(sample_rate, unit, values)?.with_start_time(start_time))
    }
}

/// Formats `v` like C's `%.{digits}g`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
