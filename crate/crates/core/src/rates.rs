//! Rate measurement and the mu-curve learner.
//!
//! From flagged tracklets this module measures the arrival rate, the queue
//! clearance time of a cycle, and builds data points (t_l, l / (t_l - t_s))
//! from the departure ranks of queued tracklets. The departure-rate curve
//! mu(t) over integer clearance times t = 1..t_max is then learned with
//! Gaussian kernel regression (Nadaraya-Watson):
//!
//! ```text
//! mu(t) = sum_p K(t, t_p) mu_p / sum_p K(t, t_p),   K(t, t_p) = exp(-(t_p - t)^2 / 2 sigma^2)
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tracklets::Tracklet;

/// ROI flags of one tracklet, the input of every rate estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackletFlags {
    pub label: u64,
    pub t_a: Option<f64>,
    pub t_d: Option<f64>,
}

impl From<&Tracklet> for TrackletFlags {
    fn from(tr: &Tracklet) -> Self {
        Self { label: tr.label, t_a: tr.t_a, t_d: tr.t_d }
    }
}

/// One training point: queue clearance time and the departure rate observed
/// for that clearance time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuDataPoint {
    pub t_p: f64,
    pub mu_tp: f64,
}

/// The learned departure-rate list mu[1..=t_max].
#[derive(Debug, Clone, PartialEq)]
pub struct MuCurve {
    values: Vec<f64>,
    pub sigma: f64,
    pub t_max: usize,
}

impl MuCurve {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// mu at integer clearance time t (1-based), clamped to [1, t_max].
    pub fn lookup(&self, t_mq: f64) -> f64 {
        let t = t_mq.round().max(1.0).min(self.t_max as f64) as usize;
        self.values[t - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mu\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, v);
        }
        out
    }

    pub fn from_values(values: Vec<f64>, sigma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoData("mu-curve needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("mu-curve values must be finite".into()));
        }
        let t_max = values.len();
        Ok(Self { values, sigma, t_max })
    }

    /// Inverse of `to_csv`: rows `t,mu` on the 1-based integer grid.
    pub fn parse_csv(text: &str, sigma: f64) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "t,mu" => {}
            Some((_, h)) => {
                return Err(Error::Parse { line: 1, msg: format!("expected header `t,mu`, got `{h}`") })
            }
            None => return Err(Error::NoData("empty mu-curve file".into())),
        }
        let mut values = Vec::new();
        for (idx, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (t, mu) = line.split_once(',').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: "expected `t,mu`".into(),
            })?;
            let t: usize = t.trim().parse().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad t: {e}"),
            })?;
            if t != values.len() + 1 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("t must run 1..t_max without gaps, got {t}"),
                });
            }
            let mu: f64 = mu.trim().parse().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad mu: {e}"),
            })?;
            values.push(mu);
        }
        Self::from_values(values, sigma)
    }
}

/// Per-cycle green/red allocation, ordered and non-overlapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalCycle {
    /// Green onset t_s, seconds.
    pub green_start: f64,
    /// Green duration T_m, seconds.
    pub green: f64,
    /// Red duration T_mr, seconds.
    pub red: f64,
}

impl SignalCycle {
    pub fn green_end(&self) -> f64 {
        self.green_start + self.green
    }

    pub fn end(&self) -> f64 {
        self.green_start + self.green + self.red
    }
}

#[derive(Debug, Clone, Default)]
pub struct SignalTimeline {
    pub cycles: Vec<SignalCycle>,
}

impl SignalTimeline {
    pub fn push(&mut self, cycle: SignalCycle) -> Result<()> {
        if cycle.green <= 0.0 || cycle.red <= 0.0 {
            return Err(Error::Config("cycle durations must be > 0".into()));
        }
        if let Some(last) = self.cycles.last() {
            if cycle.green_start < last.end() {
                return Err(Error::Config("cycles must be ordered and non-overlapping".into()));
            }
        }
        self.cycles.push(cycle);
        Ok(())
    }

    /// Fixed-duration timeline starting at t = 0.
    pub fn fixed(green: f64, red: f64, cycles: usize) -> Result<Self> {
        let mut tl = Self::default();
        for c in 0..cycles {
            tl.push(SignalCycle { green_start: c as f64 * (green + red), green, red })?;
        }
        Ok(tl)
    }

    pub fn green_intervals(&self) -> Vec<(f64, f64)> {
        self.cycles.iter().map(|c| (c.green_start, c.green_end())).collect()
    }
}

/// Departures attributed to cycle `c`: tracklets whose t_d falls inside the
/// cycle span, ordered by t_d.
fn cycle_departures(events: &[TrackletFlags], cycle: &SignalCycle) -> Vec<TrackletFlags> {
    let mut departures: Vec<TrackletFlags> = events
        .iter()
        .filter(|e| e.t_d.is_some_and(|t| t >= cycle.green_start && t < cycle.end()))
        .copied()
        .collect();
    departures.sort_by(|a, b| a.t_d.partial_cmp(&b.t_d).unwrap());
    departures
}

/// Index of tl_ad, the first departing tracklet holding both flags.
fn first_through_tracklet(departures: &[TrackletFlags]) -> Option<usize> {
    departures.iter().position(|e| e.t_a.is_some())
}

/// Training data collection: for the first `cycles` cycles of the
/// timeline, emit (t_l, l / (t_l - t_s)) for every tracklet departing before
/// tl_ad, where l is the 1-based departure rank and t_l the clearance time
/// t_d - t_s. Points from all cycles are pooled.
pub fn mu_datapoints_from_cycles(
    events: &[TrackletFlags],
    timeline: &SignalTimeline,
    cycles: usize,
) -> Result<Vec<MuDataPoint>> {
    let mut points = Vec::new();
    for cycle in timeline.cycles.iter().take(cycles) {
        let departures = cycle_departures(events, cycle);
        let upto = match first_through_tracklet(&departures) {
            Some(i) => i,
            None => departures.len(),
        };
        for (rank, event) in departures[..upto].iter().enumerate() {
            let t_d = event.t_d.expect("departure events carry t_d");
            let clearance = t_d - cycle.green_start;
            if clearance <= 0.0 {
                return Err(Error::Data(format!(
                    "departure at {t_d} not after green onset {}",
                    cycle.green_start
                )));
            }
            points.push(MuDataPoint { t_p: clearance, mu_tp: (rank + 1) as f64 / clearance });
        }
    }
    Ok(points)
}

/// Nadaraya-Watson estimate of mu at time t.
pub fn kernel_mu(points: &[MuDataPoint], sigma: f64, t: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::NoData("kernel regression needs at least one data point".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in points {
        let k = (-(p.t_p - t) * (p.t_p - t) / (2.0 * sigma * sigma)).exp();
        num += k * p.mu_tp;
        den += k;
    }
    if den == 0.0 {
        // All kernels underflowed; fall back to the nearest point's rate.
        let nearest = points
            .iter()
            .min_by(|a, b| {
                (a.t_p - t).abs().partial_cmp(&(b.t_p - t).abs()).unwrap()
            })
            .unwrap();
        return Ok(nearest.mu_tp);
    }
    Ok(num / den)
}

/// The learned curve: mu evaluated on the integer grid 1..=t_max.
pub fn build_mu_curve(points: &[MuDataPoint], t_max: usize, sigma: f64) -> Result<MuCurve> {
    let values = (1..=t_max)
        .map(|t| kernel_mu(points, sigma, t as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(MuCurve { values, sigma, t_max })
}

/// Measured queue clearance time of a cycle: t_d of the tracklet before
/// tl_ad, relative to green onset. Zero when tl_ad departs first; an error
/// when the cycle has departures but no through tracklet (or none at all).
pub fn measure_queue_clearance(
    events: &[TrackletFlags],
    cycle_index: usize,
    timeline: &SignalTimeline,
) -> Result<f64> {
    let cycle = timeline.cycles.get(cycle_index).ok_or_else(|| Error::InvalidInput(format!(
        "cycle {cycle_index} outside timeline"
    )))?;
    let departures = cycle_departures(events, cycle);
    let ad = first_through_tracklet(&departures).ok_or(Error::MeasurementUnavailable {
        cycle: cycle_index,
        msg: "no tracklet with both arrival and departure flags".into(),
    })?;
    if ad == 0 {
        return Ok(0.0);
    }
    let t_d = departures[ad - 1].t_d.expect("departure events carry t_d");
    if t_d <= cycle.green_start {
        return Err(Error::Data("departure timestamp precedes green onset".into()));
    }
    Ok(t_d - cycle.green_start)
}

/// Arrival-rate estimate for the control loop: departures counted over the stable
/// window [window_start, window_start + t_s).
pub fn measure_lambda(events: &[TrackletFlags], window_start: f64, t_s: f64) -> Result<f64> {
    if !(t_s > 0.0) {
        return Err(Error::Config("T_s must be > 0".into()));
    }
    let n = events
        .iter()
        .filter(|e| e.t_d.is_some_and(|t| t >= window_start && t < window_start + t_s))
        .count();
    Ok(n as f64 / t_s)
}

/// Variant counting Arrival-ROI crossings instead, as described in the
/// unidirectional-flow model text. Exposed for experiments; the default loop
/// uses `measure_lambda`.
pub fn measure_lambda_arrivals(
    events: &[TrackletFlags],
    window_start: f64,
    t_s: f64,
) -> Result<f64> {
    if !(t_s > 0.0) {
        return Err(Error::Config("T_s must be > 0".into()));
    }
    let n = events
        .iter()
        .filter(|e| e.t_a.is_some_and(|t| t >= window_start && t < window_start + t_s))
        .count();
    Ok(n as f64 / t_s)
}

pub fn datapoints_to_csv(points: &[MuDataPoint]) -> String {
    let mut out = String::from("t_p,mu_tp\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.t_p, p.mu_tp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dep(label: u64, t_d: f64) -> TrackletFlags {
        TrackletFlags { label, t_a: None, t_d: Some(t_d) }
    }

    fn through(label: u64, t_a: f64, t_d: f64) -> TrackletFlags {
        TrackletFlags { label, t_a: Some(t_a), t_d: Some(t_d) }
    }

    fn one_cycle(t_s: f64) -> SignalTimeline {
        let mut tl = SignalTimeline::default();
        tl.push(SignalCycle { green_start: t_s, green: 55.0, red: 39.0 }).unwrap();
        tl
    }

    #[test]
    fn uniform_departures_give_constant_rate() {
        let tl = one_cycle(100.0);
        let events =
            vec![dep(1, 102.0), dep(2, 104.0), dep(3, 106.0), through(4, 101.0, 110.0)];
        let points = mu_datapoints_from_cycles(&events, &tl, 1).unwrap();
        assert_eq!(points.len(), 3);
        for (p, expect_t) in points.iter().zip([2.0, 4.0, 6.0]) {
            assert!((p.t_p - expect_t).abs() < 1e-12);
            assert!((p.mu_tp - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_rate_hand_arithmetic() {
        let tl = one_cycle(0.0);
        let events = vec![dep(1, 1.0), dep(2, 2.0), dep(3, 4.0), through(4, 0.5, 9.0)];
        let points = mu_datapoints_from_cycles(&events, &tl, 1).unwrap();
        let expected = [(1.0, 1.0), (2.0, 1.0), (4.0, 0.75)];
        for (p, (t, mu)) in points.iter().zip(expected) {
            assert!((p.t_p - t).abs() < 1e-12 && (p.mu_tp - mu).abs() < 1e-12);
        }
        // t_l strictly increasing with rank, rates positive and finite.
        for w in points.windows(2) {
            assert!(w[1].t_p > w[0].t_p);
        }
        assert!(points.iter().all(|p| p.mu_tp > 0.0 && p.mu_tp.is_finite()));
    }

    #[test]
    fn through_tracklet_first_means_no_points() {
        let tl = one_cycle(0.0);
        let events = vec![through(1, 0.5, 2.0), dep(2, 3.0)];
        let points = mu_datapoints_from_cycles(&events, &tl, 1).unwrap();
        assert!(points.is_empty());
    }

    #[test]
    fn kernel_single_point_is_identity() {
        let points = vec![MuDataPoint { t_p: 5.0, mu_tp: 1.0 }];
        for t in [0.0, 5.0, 11.0] {
            assert!((kernel_mu(&points, 1.0, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_symmetric_points_average() {
        let points = vec![
            MuDataPoint { t_p: 4.0, mu_tp: 0.8 },
            MuDataPoint { t_p: 6.0, mu_tp: 1.2 },
        ];
        for sigma in [0.3, 1.0, 5.0] {
            assert!((kernel_mu(&points, sigma, 5.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_requires_data() {
        assert!(matches!(kernel_mu(&[], 1.0, 1.0), Err(Error::NoData(_))));
    }

    #[test]
    fn curve_matches_pointwise_kernel_and_has_right_length() {
        let points: Vec<MuDataPoint> = (1..=10)
            .map(|i| MuDataPoint { t_p: i as f64 * 0.9, mu_tp: 0.5 + 0.05 * i as f64 })
            .collect();
        let curve = build_mu_curve(&points, 12, 1.0).unwrap();
        assert_eq!(curve.values().len(), 12);
        for t in 1..=12usize {
            let direct = kernel_mu(&points, 1.0, t as f64).unwrap();
            assert_eq!(curve.values()[t - 1], direct);
        }
        // Kernel average stays within the training range.
        let lo = points.iter().map(|p| p.mu_tp).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.mu_tp).fold(f64::NEG_INFINITY, f64::max);
        assert!(curve.values().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn flat_points_give_flat_curve() {
        let points: Vec<MuDataPoint> =
            (1..=6).map(|i| MuDataPoint { t_p: i as f64, mu_tp: 0.9 }).collect();
        let curve = build_mu_curve(&points, 12, 1.0).unwrap();
        assert!(curve.values().iter().all(|v| (v - 0.9).abs() < 1e-12));
    }

    #[test]
    fn clearance_measurement() {
        let tl = one_cycle(10.0);
        // tl_ad- departs at t_s + 5.98.
        let events = vec![dep(1, 12.0), dep(2, 15.98), through(3, 11.0, 20.0)];
        let t_mq = measure_queue_clearance(&events, 0, &tl).unwrap();
        assert!((t_mq - 5.98).abs() < 1e-12);
    }

    #[test]
    fn clearance_zero_when_first_departure_is_through() {
        let tl = one_cycle(10.0);
        let events = vec![through(3, 11.0, 12.0), dep(1, 14.0)];
        assert_eq!(measure_queue_clearance(&events, 0, &tl).unwrap(), 0.0);
    }

    #[test]
    fn clearance_unavailable_without_through_tracklet() {
        let tl = one_cycle(10.0);
        let events = vec![dep(1, 12.0)];
        assert!(matches!(
            measure_queue_clearance(&events, 0, &tl),
            Err(Error::MeasurementUnavailable { cycle: 0, .. })
        ));
    }

    #[test]
    fn lambda_is_count_over_window() {
        let events: Vec<TrackletFlags> = (0..6).map(|i| dep(i, 10.0 + i as f64 * 3.0)).collect();
        let lambda = measure_lambda(&events, 10.0, 20.0).unwrap();
        assert!((lambda - 0.3).abs() < 1e-12);
        assert_eq!(measure_lambda(&events, 100.0, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn lambda_arrival_variant_counts_t_a() {
        let events = vec![through(1, 5.0, 8.0), through(2, 6.0, 9.0), dep(3, 7.0)];
        assert!((measure_lambda_arrivals(&events, 0.0, 10.0).unwrap() - 0.2).abs() < 1e-12);
        assert!((measure_lambda(&events, 0.0, 10.0).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lookup_rounds_and_clamps() {
        let points: Vec<MuDataPoint> =
            (1..=6).map(|i| MuDataPoint { t_p: i as f64, mu_tp: 0.9 }).collect();
        let curve = build_mu_curve(&points, 12, 1.0).unwrap();
        assert!((curve.lookup(3.0) - 0.9).abs() < 1e-12);
        assert_eq!(curve.lookup(25.0), curve.values()[11]);
        assert_eq!(curve.lookup(-2.0), curve.values()[0]);
    }
}
