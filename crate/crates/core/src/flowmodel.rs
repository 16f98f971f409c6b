//! Observation and ROI data model shared by the whole pipeline, plus the
//! observation CSV reader/writer.
//!
//! An observation is one optical-flow sample: a pixel position, the frame it
//! was seen in, and a quantized motion direction. Direction is kept both as a
//! bin index and as the bin-center unit vector so that downstream distance
//! computations are free of wrap-around artifacts.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One optical-flow sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub direction_bin: usize,
    /// Unit vector (cos, sin) of the bin center.
    pub direction_vec: (f64, f64),
}

impl ObservationPoint {
    pub fn new(frame: u64, x: f64, y: f64, angle_rad: f64, bins: usize) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite observation position ({x}, {y})"
            )));
        }
        let (direction_bin, direction_vec) = quantize_direction(angle_rad, bins)?;
        Ok(Self { frame, x, y, direction_bin, direction_vec })
    }
}

/// Axis-aligned region of interest. Containment is closed: boundary points
/// count as inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Roi {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::Config(format!(
                "degenerate ROI [{x_min},{y_min},{x_max},{y_max}]: require x_min < x_max and y_min < y_max"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn overlaps(&self, other: &Roi) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }
}

/// All observations emitted for a single frame, in stream order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameBatch {
    pub frame: u64,
    pub observations: Vec<ObservationPoint>,
}

impl FrameBatch {
    pub fn new(frame: u64) -> Self {
        Self { frame, observations: Vec::new() }
    }
}

/// Quantize an angle (radians) into one of `bins` equal sectors centered on
/// multiples of the bin width. Returns the bin index and the bin-center unit
/// vector.
pub fn quantize_direction(angle: f64, bins: usize) -> Result<(usize, (f64, f64))> {
    if bins == 0 {
        return Err(Error::InvalidInput("direction bin count must be >= 1".into()));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite angle {angle}")));
    }
    let width = TAU / bins as f64;
    let wrapped = angle.rem_euclid(TAU);
    let bin = ((wrapped + width / 2.0) / width).floor() as usize % bins;
    let center = bin as f64 * width;
    Ok((bin, (center.cos(), center.sin())))
}

/// Outcome of moving from one point to another relative to an ROI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    None,
    Entered,
    Exited,
}

pub fn roi_crossing_test(prev: (f64, f64), cur: (f64, f64), roi: &Roi) -> Crossing {
    let was_in = roi.contains(prev.0, prev.1);
    let is_in = roi.contains(cur.0, cur.1);
    match (was_in, is_in) {
        (false, true) => Crossing::Entered,
        (true, false) => Crossing::Exited,
        _ => Crossing::None,
    }
}

pub const OBSERVATION_CSV_HEADER: &str = "frame,x,y,angle_rad";

/// Parse an observation stream from CSV text (`frame,x,y,angle_rad`).
///
/// Frames must be nondecreasing; within a frame, file order is preserved.
/// Quantization into `bins` directions happens at load.
pub fn parse_observations(text: &str, bins: usize) -> Result<Vec<FrameBatch>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == OBSERVATION_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{OBSERVATION_CSV_HEADER}`, got `{header}`"),
            })
        }
        None => return Ok(Vec::new()),
    }

    let mut batches: Vec<FrameBatch> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| {
            fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("missing field `{name}`"),
            })
        };
        let frame: u64 = next_field("frame")?.trim().parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("bad frame index: {e}"),
        })?;
        let num = |name: &str, v: &str| -> Result<f64> {
            v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad {name}: {e}"),
            })
        };
        let x = next_field("x").and_then(|v| num("x", v))?;
        let y = next_field("y").and_then(|v| num("y", v))?;
        let angle = next_field("angle_rad").and_then(|v| num("angle_rad", v))?;
        if fields.next().is_some() {
            return Err(Error::Parse { line: line_no, msg: "too many fields".into() });
        }
        let obs = ObservationPoint::new(frame, x, y, angle, bins).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;

        match batches.last_mut() {
            Some(last) if last.frame == frame => last.observations.push(obs),
            Some(last) if last.frame > frame => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("frame index {frame} decreases below {}", last.frame),
                })
            }
            _ => {
                let mut batch = FrameBatch::new(frame);
                batch.observations.push(obs);
                batches.push(batch);
            }
        }
    }
    Ok(batches)
}

pub fn load_observations(path: &Path, bins: usize) -> Result<Vec<FrameBatch>> {
    let text = std::fs::read_to_string(path)?;
    parse_observations(&text, bins)
}

/// Render an observation stream back to CSV. The angle written is the bin
/// center, so save/load round-trips exactly on quantized streams.
pub fn observations_to_csv(batches: &[FrameBatch]) -> String {
    let mut out = String::from(OBSERVATION_CSV_HEADER);
    out.push('\n');
    for batch in batches {
        for obs in &batch.observations {
            let angle = obs.direction_vec.1.atan2(obs.direction_vec.0);
            let _ = writeln!(out, "{},{},{},{}", batch.frame, obs.x, obs.y, angle);
        }
    }
    out
}

pub fn save_observations(path: &Path, batches: &[FrameBatch]) -> Result<()> {
    std::fs::write(path, observations_to_csv(batches))?;
    Ok(())
}
