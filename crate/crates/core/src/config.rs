//! Flat key=value experiment configuration with CLI overrides.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flowmodel::Roi;
use crate::predictor::PredictorConfig;
use crate::simulator::{ArrivalProcess, SimConfig};

/// Everything a run needs: clustering, predictor, and simulator parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// DPMM concentration parameter.
    pub alpha: f64,
    /// Direction quantization bins (D).
    pub direction_bins: usize,
    /// Direction weight w in the feature metric, px.
    pub direction_weight: f64,
    /// Cluster retirement ttl, frames.
    pub ttl_frames: u64,
    pub predictor: PredictorConfig,
    pub sim: SimConfig,
    /// Cycles to run in closed-loop / simulate modes.
    pub total_cycles: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: 3e-7,
            direction_bins: 8,
            direction_weight: 10.0,
            ttl_frames: 30,
            predictor: PredictorConfig::default(),
            sim: SimConfig::default(),
            total_cycles: 50,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.direction_bins == 0 {
            return Err(Error::Config("direction_bins must be >= 1".into()));
        }
        if self.ttl_frames == 0 {
            return Err(Error::Config("ttl_frames must be >= 1".into()));
        }
        if self.total_cycles <= self.predictor.learn_cycles {
            return Err(Error::Config(format!(
                "total_cycles ({}) must exceed learn_cycles ({})",
                self.total_cycles, self.predictor.learn_cycles
            )));
        }
        self.predictor.validate()?;
        let mut sim = self.sim.clone();
        sim.direction_bins = self.direction_bins;
        sim.validate()?;
        Ok(())
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: std::num::ParseFloatError| Error::Config(format!("{key}: {e}"));
        let bad_int = |e: std::num::ParseIntError| Error::Config(format!("{key}: {e}"));
        let v = value.trim();
        match key {
            "seed" => self.seed = v.parse().map_err(bad_int)?,
            "alpha" => self.alpha = v.parse().map_err(bad)?,
            "direction_bins" => self.direction_bins = v.parse().map_err(bad_int)?,
            "direction_weight" => self.direction_weight = v.parse().map_err(bad)?,
            "ttl_frames" => self.ttl_frames = v.parse().map_err(bad_int)?,
            "gamma" => self.predictor.gamma = v.parse().map_err(bad)?,
            "t_s" => self.predictor.t_s = v.parse().map_err(bad)?,
            "learn_cycles" => self.predictor.learn_cycles = v.parse().map_err(bad_int)?,
            "t_max" => self.predictor.t_max = v.parse().map_err(bad_int)?,
            "t_m_fixed" => self.predictor.t_m_fixed = v.parse().map_err(bad)?,
            "t_cycle" => self.predictor.t_cycle = v.parse().map_err(bad)?,
            "min_green" => self.predictor.min_green = v.parse().map_err(bad)?,
            "sigma" => self.predictor.sigma = v.parse().map_err(bad)?,
            "correction_uses_green" => {
                self.predictor.correction_uses_green = parse_bool(key, v)?
            }
            "total_cycles" => self.total_cycles = v.parse().map_err(bad_int)?,
            "lambda_true" => {
                self.sim.arrivals = ArrivalProcess::Poisson { rate: v.parse().map_err(bad)? }
            }
            "arrivals" => {
                self.sim.arrivals = match v {
                    "disabled" => ArrivalProcess::Disabled,
                    other => {
                        return Err(Error::Config(format!(
                            "arrivals: expected `disabled` or use lambda_true/fixed_gap, got `{other}`"
                        )))
                    }
                }
            }
            "fixed_gap" => {
                self.sim.arrivals = ArrivalProcess::Fixed { gap: v.parse().map_err(bad)? }
            }
            "bus_fraction" => self.sim.bus_fraction = v.parse().map_err(bad)?,
            "frame_rate" => self.sim.frame_rate = v.parse().map_err(bad)?,
            "obs_grid_spacing" => self.sim.obs_grid_spacing = v.parse().map_err(bad)?,
            "emit_observations" => self.sim.emit_observations = parse_bool(key, v)?,
            "lane_y" => self.sim.lane_y = v.parse().map_err(bad)?,
            "direction_noise_sd" => self.sim.direction_noise_sd = v.parse().map_err(bad)?,
            "road_length" => self.sim.road_length = v.parse().map_err(bad)?,
            "stop_line" => self.sim.stop_line = v.parse().map_err(bad)?,
            "standstill_gap" => self.sim.standstill_gap = v.parse().map_err(bad)?,
            "stop_break" => self.sim.stop_break = v.parse().map_err(bad)?,
            "car_start_headway" => self.sim.car.start_headway = v.parse().map_err(bad)?,
            "bus_start_headway" => self.sim.bus.start_headway = v.parse().map_err(bad)?,
            "cruise_speed" => {
                let speed = v.parse().map_err(bad)?;
                self.sim.car.cruise_speed = speed;
                self.sim.bus.cruise_speed = speed;
            }
            "arrival_roi" => self.sim.arrival_roi = parse_roi(key, v)?,
            "departure_roi" => self.sim.departure_roi = parse_roi(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a flat `key=value` file: one assignment per line, `#` comments.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(msg) => Error::Parse { line: idx + 1, msg },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_file_text(&std::fs::read_to_string(path)?)?;
        Ok(config)
    }

    /// Render back to the same key=value format.
    pub fn to_file_text(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("seed", self.seed.to_string());
        map.insert("alpha", self.alpha.to_string());
        map.insert("direction_bins", self.direction_bins.to_string());
        map.insert("direction_weight", self.direction_weight.to_string());
        map.insert("ttl_frames", self.ttl_frames.to_string());
        map.insert("gamma", self.predictor.gamma.to_string());
        map.insert("t_s", self.predictor.t_s.to_string());
        map.insert("learn_cycles", self.predictor.learn_cycles.to_string());
        map.insert("t_max", self.predictor.t_max.to_string());
        map.insert("t_m_fixed", self.predictor.t_m_fixed.to_string());
        map.insert("t_cycle", self.predictor.t_cycle.to_string());
        map.insert("min_green", self.predictor.min_green.to_string());
        map.insert("sigma", self.predictor.sigma.to_string());
        map.insert("total_cycles", self.total_cycles.to_string());
        match self.sim.arrivals {
            ArrivalProcess::Poisson { rate } => {
                map.insert("lambda_true", rate.to_string());
            }
            ArrivalProcess::Fixed { gap } => {
                map.insert("fixed_gap", gap.to_string());
            }
            ArrivalProcess::Disabled => {
                map.insert("arrivals", "disabled".to_string());
            }
        }
        map.insert("bus_fraction", self.sim.bus_fraction.to_string());
        map.insert("frame_rate", self.sim.frame_rate.to_string());
        map.insert("obs_grid_spacing", self.sim.obs_grid_spacing.to_string());
        map.insert("direction_noise_sd", self.sim.direction_noise_sd.to_string());
        map.insert("emit_observations", self.sim.emit_observations.to_string());
        map.insert("road_length", self.sim.road_length.to_string());
        map.insert("stop_line", self.sim.stop_line.to_string());
        map.insert("lane_y", self.sim.lane_y.to_string());
        map.insert("standstill_gap", self.sim.standstill_gap.to_string());
        map.insert("stop_break", self.sim.stop_break.to_string());
        let roi = |r: &Roi| format!("{},{},{},{}", r.x_min, r.y_min, r.x_max, r.y_max);
        map.insert("arrival_roi", roi(&self.sim.arrival_roi));
        map.insert("departure_roi", roi(&self.sim.departure_roi));
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true/false, got `{other}`"))),
    }
}

fn parse_roi(key: &str, v: &str) -> Result<Roi> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::Config(format!("{key}: expected x_min,y_min,x_max,y_max")));
    }
    let mut nums = [0.0f64; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|e| Error::Config(format!("{key}: {e}")))?;
    }
    Roi::new(nums[0], nums[1], nums[2], nums[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn file_round_trip() {
        let mut config = ExperimentConfig::default();
        config.set("gamma", "2.5").unwrap();
        config.set("lambda_true", "0.35").unwrap();
        let text = config.to_file_text();
        let mut reread = ExperimentConfig::default();
        reread.apply_file_text(&text).unwrap();
        assert_eq!(reread.predictor.gamma, 2.5);
        assert_eq!(reread.sim.arrivals, ArrivalProcess::Poisson { rate: 0.35 });
    }

    #[test]
    fn invalid_gamma_names_key_and_constraint() {
        let mut config = ExperimentConfig::default();
        config.set("gamma", "0.5").unwrap();
        let msg = config.validate().unwrap_err().to_string();
        assert!(msg.contains("gamma") && msg.contains("> 1"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let mut config = ExperimentConfig::default();
        let msg = config.set("gammma", "2.0").unwrap_err().to_string();
        assert!(msg.contains("gammma"));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let mut config = ExperimentConfig::default();
        let err = config.apply_file_text("seed=1\nnot a line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let mut config = ExperimentConfig::default();
        config.apply_file_text("# comment\n\nseed=9\n").unwrap();
        assert_eq!(config.seed, 9);
    }
}
