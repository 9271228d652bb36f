//! Monochrome display model: values are mapped to a per-column row array,
//! drawn as a connected polyline, and erased by clearing the previous
//! trace before the next one is drawn.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::SampleFrame;

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 64;

/// Binary pixel grid, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Framebuffer {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    dirty: Option<DirtyRegion>,
}

/// Inclusive bounding box of pixels touched since the last `take_dirty`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirtyRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Framebuffer {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("framebuffer dimensions must be positive"));
        }
        Ok(Framebuffer {
            width,
            height,
            pixels: vec![false; width * height],
            dirty: None,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.pixels[y * self.width + x]
    }

    /// Writes one pixel; coordinates outside the grid are ignored.
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        if x >= self.width || y >= self.height {
            return;
        }
        self.pixels[y * self.width + x] = on;
        self.dirty = Some(match self.dirty {
            None => DirtyRegion { x0: x, y0: y, x1: x, y1: y },
            Some(d) => DirtyRegion {
                x0: d.x0.min(x),
                y0: d.y0.min(y),
                x1: d.x1.max(x),
                y1: d.y1.max(y),
            },
        });
    }

    pub fn take_dirty(&mut self) -> Option<DirtyRegion> {
        self.dirty.take()
    }

    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Same pixels, ignoring dirty tracking.
    pub fn same_pixels(&self, other: &Framebuffer) -> bool {
        self.width == other.width && self.height == other.height && self.pixels == other.pixels
    }

    /// One character per 1×2 pixel block: ' ', '\'' (top), '.' (bottom),
    /// ':' (both).
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height.div_ceil(2));
        for y in (0..self.height).step_by(2) {
            for x in 0..self.width {
                let top = self.get(x, y);
                let bottom = self.get(x, y + 1);
                out.push(match (top, bottom) {
                    (false, false) => ' ',
                    (true, false) => '\'',
                    (false, true) => '.',
                    (true, true) => ':',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Screen row per display column; row 0 is the top of the screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTrace {
    pub rows: Vec<usize>,
    pub height: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl PlotTrace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Pixels of the connected polyline: each column's own row plus the
    /// rows strictly between it and the previous column's row.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.rows.len() * 2);
        for (x, &r) in self.rows.iter().enumerate() {
            out.push((x, r));
            if x > 0 {
                let prev = self.rows[x - 1];
                let (lo, hi) = (prev.min(r), prev.max(r));
                out.extend((lo + 1..hi).map(|y| (x, y)));
            }
        }
        out.sort_unstable();
        out
    }
}

/// Decimates `frame` to `width` columns and maps each value to a row.
/// Larger values land higher on screen; out-of-range values clamp.
pub fn map_to_trace(frame: &SampleFrame, width: usize, height: usize, v_min: f64, v_max: f64) -> Result<PlotTrace> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("trace dimensions must be positive"));
    }
    if v_max.partial_cmp(&v_min) != Some(std::cmp::Ordering::Greater) || !v_min.is_finite() || !v_max.is_finite() {
        return Err(Error::invalid(format!(
            "value range must satisfy v_min < v_max, got {v_min}..{v_max}"
        )));
    }
    let n = frame.len();
    let rows = if n == 0 {
        Vec::new()
    } else {
        (0..width)
            .map(|col| {
                let v = frame.values[col * n / width];
                let frac = ((v - v_min) / (v_max - v_min)).clamp(0.0, 1.0);
                let level = (frac * (height - 1) as f64).round() as usize;
                (height - 1) - level
            })
            .collect()
    };
    Ok(PlotTrace {
        rows,
        height,
        v_min,
        v_max,
    })
}

/// Padded `(min, max)` of a frame, usable as a plot range even when the
/// frame is constant or empty.
pub fn auto_range(frame: &SampleFrame) -> (f64, f64) {
    match frame.min_max() {
        None => (0.0, 1.0),
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, _)) => (lo - 0.5, lo + 0.5),
    }
}

/// Clears `old` (if any) and draws `new`.
pub fn draw_trace(fb: &mut Framebuffer, old: Option<&PlotTrace>, new: &PlotTrace) {
    if let Some(old) = old {
        for (x, y) in old.pixels() {
            fb.set(x, y, false);
        }
    }
    for (x, y) in new.pixels() {
        fb.set(x, y, true);
    }
}

/// SVG document with one polyline whose points are `column,row` pairs of
/// the trace.
pub fn svg_string(trace: &PlotTrace, width: usize) -> String {
    let mut points = String::new();
    for (x, &y) in trace.rows.iter().enumerate() {
        if x > 0 {
            points.push(' ');
        }
        let _ = write!(points, "{x},{y}");
    }
    let h = trace.height;
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{h}\" viewBox=\"0 0 {width} {h}\">\n\
<rect width=\"{width}\" height=\"{h}\" fill=\"black\"/>\n\
<polyline fill=\"none\" stroke=\"white\" stroke-width=\"1\" points=\"{points}\"/>\n\
</svg>\n"
    )
}

/// Renders `frame` at `width`×`height` using its own value range.
pub fn frame_svg(frame: &SampleFrame, width: usize, height: usize) -> Result<String> {
    let (lo, hi) = auto_range(frame);
    Ok(svg_string(&map_to_trace(frame, width, height, lo, hi)?, width))
}

pub fn export_svg(frame: &SampleFrame, width: usize, height: usize, path: &Path) -> Result<()> {
    let svg = frame_svg(frame, width, height)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn export_ascii(fb: &Framebuffer) -> String {
    fb.to_ascii()
}

/// Parses the `points` attribute back out of an SVG produced here.
pub fn svg_points(svg: &str) -> Vec<(usize, usize)> {
    let Some(start) = svg.find("points=\"") else {
        return Vec::new();
    };
    let rest = &svg[start + 8..];
    let end = rest.find('"').unwrap_or(rest.len());
    rest[..end]
        .split_whitespace()
        .filter_map(|p| {
            let (x, y) = p.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Unit;

    fn frame(v: Vec<f64>) -> SampleFrame {
        SampleFrame::new(100.0, Unit::Volts, v).unwrap()
    }

    #[test]
    fn constant_frames_map_to_fixed_rows() {
        let t = map_to_trace(&frame(vec![0.0; 300]), 128, 63, 0.0, 1.0).unwrap();
        assert!(t.rows.iter().all(|&r| r == 62));
        let t = map_to_trace(&frame(vec![0.5; 300]), 128, 63, 0.0, 1.0).unwrap();
        assert!(t.rows.iter().all(|&r| r == 31));
        let t = map_to_trace(&frame(vec![9.0; 10]), 16, 8, 0.0, 1.0).unwrap();
        assert!(t.rows.iter().all(|&r| r == 0));
        assert!(map_to_trace(&frame(vec![]), 16, 8, 1.0, 1.0).is_err());
    }

    #[test]
    fn ramp_is_a_monotone_staircase() {
        let w = 128;
        let h = 64;
        let ramp = frame((0..w).map(|i| i as f64 / (w - 1) as f64).collect());
        let t = map_to_trace(&ramp, w, h, 0.0, 1.0).unwrap();
        assert_eq!(t.rows[0], h - 1);
        assert_eq!(t.rows[w - 1], 0);
        for (i, pair) in t.rows.windows(2).enumerate() {
            assert!(pair[1] <= pair[0]);
            // closed form: row = (h−1) − round(i/(w−1)·(h−1))
            let expect = (h - 1) - ((i + 1) as f64 / (w - 1) as f64 * (h - 1) as f64).round() as usize;
            assert_eq!(pair[1], expect);
        }
    }

    #[test]
    fn polyline_is_connected() {
        let t = PlotTrace {
            rows: vec![5, 1, 1, 4],
            height: 8,
            v_min: 0.0,
            v_max: 1.0,
        };
        let expect = vec![(0, 5), (1, 1), (1, 2), (1, 3), (1, 4), (2, 1), (3, 2), (3, 3), (3, 4)];
        assert_eq!(t.pixels(), expect);
    }

    #[test]
    fn redraw_same_trace_is_noop() {
        let t = map_to_trace(&frame((0..200).map(|i| (i as f64 * 0.1).sin()).collect()), 64, 32, -1.0, 1.0)
            .unwrap();
        let mut fb = Framebuffer::new(64, 32).unwrap();
        draw_trace(&mut fb, None, &t);
        let before = fb.clone();
        draw_trace(&mut fb, Some(&t), &t);
        assert!(fb.same_pixels(&before));
        assert_eq!(fb.lit_count(), t.pixels().len());
    }

    #[test]
    fn ascii_blocks() {
        let mut fb = Framebuffer::new(3, 3).unwrap();
        fb.set(0, 0, true);
        fb.set(1, 1, true);
        fb.set(2, 0, true);
        fb.set(2, 1, true);
        fb.set(1, 2, true);
        fb.set(5, 5, true);
        assert_eq!(fb.to_ascii(), "'.:\n ' \n");
        assert_eq!(fb.take_dirty(), Some(DirtyRegion { x0: 0, y0: 0, x1: 2, y1: 2 }));
    }

    #[test]
    fn empty_frame_svg_is_valid() {
        let svg = frame_svg(&frame(vec![]), 128, 64).unwrap();
        assert!(svg.contains("<polyline") && svg.contains("points=\"\""));
        assert!(svg_points(&svg).is_empty());
    }
}
