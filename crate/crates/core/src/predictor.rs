//! Closed-loop signal duration prediction.
//!
//! Per cycle: estimate next-cycle rates from the current measurements,
//! predict the next queue clearance time, free-flow time and correction term,
//! and command the next green duration
//!
//! ```text
//! T_m(c+1) = T_mq(c+1) + T_mf(c+1) + dt(c+1)
//! T_mq(c+1) = lambda_e * T_mr(c) / mu_e
//! T_mf(c+1) = gamma * T_mq(c+1) + T_s
//! dt(c+1)   = (lambda_a - lambda_e) / lambda_a * T_mq(c)
//! ```
//!
//! subject to the fixed-cycle criteria check. The first `learn_cycles` cycles
//! run at the fixed duration and feed the mu-curve learner.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rates::{
    build_mu_curve, measure_lambda, measure_queue_clearance, mu_datapoints_from_cycles, MuCurve,
    MuDataPoint, SignalCycle, SignalTimeline, TrackletFlags,
};

#[derive(Debug, Clone, Copy)]
pub struct PredictorConfig {
    /// Free-flow multiplier on queue clearance time, > 1.
    pub gamma: f64,
    /// Stable-flow measurement window, seconds.
    pub t_s: f64,
    /// Number of fixed-duration learning cycles (C).
    pub learn_cycles: usize,
    /// Upper bound of the mu-curve grid, seconds.
    pub t_max: usize,
    /// Green duration during learning, seconds.
    pub t_m_fixed: f64,
    /// Fixed total cycle duration, seconds.
    pub t_cycle: f64,
    /// Floor on commanded green, seconds.
    pub min_green: f64,
    /// Kernel bandwidth for the mu-curve, seconds.
    pub sigma: f64,
    /// Use the printed form of the correction term (multiply by the previous
    /// green duration instead of the previous clearance time).
    pub correction_uses_green: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            t_s: 20.0,
            learn_cycles: 4,
            t_max: 12,
            t_m_fixed: 55.0,
            t_cycle: 94.0,
            min_green: 5.0,
            sigma: 1.0,
            correction_uses_green: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::Config(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if !(self.t_s > 0.0) {
            return Err(Error::Config(format!("t_s must be > 0, got {}", self.t_s)));
        }
        if !(self.min_green > 0.0) {
            return Err(Error::Config(format!("min_green must be > 0, got {}", self.min_green)));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be >= 1".into()));
        }
        if !(self.t_m_fixed > 0.0 && self.t_m_fixed < self.t_cycle) {
            return Err(Error::Config(format!(
                "t_m_fixed must lie in (0, t_cycle), got {} vs {}",
                self.t_m_fixed, self.t_cycle
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Next-cycle prediction components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prediction {
    pub t_mq_next: f64,
    pub t_mf_next: f64,
    pub delta_t: f64,
    pub t_m_next: f64,
    pub criteria_ok: bool,
}

/// Everything measured and predicted in one cycle.
#[derive(Debug, Clone)]
pub struct SignalCycleRecord {
    pub c: usize,
    pub t_m: f64,
    pub t_mr: f64,
    pub t_mq_measured: Option<f64>,
    pub lambda_a: f64,
    pub mu_a: Option<f64>,
    pub lambda_e: f64,
    pub mu_e: Option<f64>,
    pub prediction: Option<Prediction>,
    /// Commanded green for the next cycle (prediction or fallback).
    pub commanded_next: f64,
    /// True when measurement failed and the previous duration was repeated.
    pub fallback: bool,
}

/// The measured rates of the ending cycle are the estimates for the next one.
pub fn estimate_next_rates(mu_a: f64, lambda_a: f64) -> (f64, f64) {
    (mu_a, lambda_a)
}

/// Queue clearance prediction: T_mq = lambda_e * T_mr / mu_e.
pub fn predict_queue_clearance(lambda_e: f64, t_mr: f64, mu_e: f64) -> Result<f64> {
    if !(mu_e > 0.0) {
        return Err(Error::DegenerateService);
    }
    Ok(lambda_e * t_mr / mu_e)
}

/// Free-flow allowance: T_mf = gamma * T_mq + T_s.
pub fn predict_free_flow(t_mq_next: f64, gamma: f64, t_s: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::Config(format!("gamma must be > 1, got {gamma}")));
    }
    Ok(t_mq_next * gamma + t_s)
}

/// Correction term: the relative arrival-rate error
/// scales the previous cycle's measured queue clearance time. With no
/// traffic (lambda_a = 0) the correction is zero.
pub fn correction_term(lambda_a: f64, lambda_e: f64, t_mq_prev: f64) -> f64 {
    if lambda_a == 0.0 {
        return 0.0;
    }
    (lambda_a - lambda_e) / lambda_a * t_mq_prev
}

/// Total green duration: exact sum of the components, floored at min_green.
pub fn predict_signal_duration(
    t_mq_next: f64,
    t_mf_next: f64,
    delta_t: f64,
    min_green: f64,
) -> f64 {
    (t_mq_next + t_mf_next + delta_t).max(min_green)
}

/// Unidirectional criteria: fixed cycle duration with a nonzero red phase.
/// Declared as a hook so an M-way throughput objective can replace it.
pub fn check_criteria(t_m_next: f64, config: &PredictorConfig) -> bool {
    t_m_next < config.t_cycle
}

/// Closed-loop driver. Feed it the cumulative flagged-tracklet list at the
/// end of every cycle; it returns the green duration to command next.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    config: PredictorConfig,
    timeline: SignalTimeline,
    points: Vec<MuDataPoint>,
    curve: Option<MuCurve>,
    records: Vec<SignalCycleRecord>,
    current_green: f64,
    prev_lambda_a: Option<f64>,
    pending: Option<Prediction>,
}

impl AdaptiveController {
    pub fn new(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            current_green: config.t_m_fixed,
            config,
            timeline: SignalTimeline::default(),
            points: Vec::new(),
            curve: None,
            records: Vec::new(),
            prev_lambda_a: None,
            pending: None,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn mu_curve(&self) -> Option<&MuCurve> {
        self.curve.as_ref()
    }

    pub fn mu_points(&self) -> &[MuDataPoint] {
        &self.points
    }

    pub fn records(&self) -> &[SignalCycleRecord] {
        &self.records
    }

    pub fn timeline(&self) -> &SignalTimeline {
        &self.timeline
    }

    /// Green duration for the cycle about to run.
    pub fn current_green(&self) -> f64 {
        self.current_green
    }

    pub fn current_red(&self) -> f64 {
        self.config.t_cycle - self.current_green
    }

    /// Register the cycle that is about to run, returning its span.
    pub fn begin_cycle(&mut self, green_start: f64) -> Result<SignalCycle> {
        let cycle = SignalCycle {
            green_start,
            green: self.current_green,
            red: self.config.t_cycle - self.current_green,
        };
        self.timeline.push(cycle)?;
        Ok(cycle)
    }

    /// Process the end of cycle `c` given the cumulative event list.
    /// Returns the green duration for cycle c + 1.
    pub fn end_of_cycle(&mut self, c: usize, events: &[TrackletFlags]) -> Result<f64> {
        let cycle = *self.timeline.cycles.get(c).ok_or_else(|| {
            Error::InvalidInput(format!("cycle {c} was never begun"))
        })?;

        let lambda_a = measure_lambda(events, cycle.green_end() - self.config.t_s, self.config.t_s)?;
        let lambda_e = self.prev_lambda_a.unwrap_or(lambda_a);
        let t_mq = match measure_queue_clearance(events, c, &self.timeline) {
            Ok(v) => Some(v),
            // A cycle without any departures has no queue to clear.
            Err(Error::MeasurementUnavailable { .. }) if lambda_a == 0.0 => Some(0.0),
            Err(Error::MeasurementUnavailable { .. }) => None,
            Err(e) => return Err(e),
        };

        // Learning phase: pool data points, run fixed duration.
        if c + 1 == self.config.learn_cycles {
            self.points =
                mu_datapoints_from_cycles(events, &self.timeline, self.config.learn_cycles)?;
            if !self.points.is_empty() {
                self.curve =
                    Some(build_mu_curve(&self.points, self.config.t_max, self.config.sigma)?);
            }
        }

        let mu_a = match (&self.curve, t_mq) {
            (Some(curve), Some(t_mq)) => Some(curve.lookup(t_mq)),
            _ => None,
        };

        let mut record = SignalCycleRecord {
            c,
            t_m: cycle.green,
            t_mr: cycle.red,
            t_mq_measured: t_mq,
            lambda_a,
            mu_a,
            lambda_e,
            mu_e: mu_a,
            prediction: None,
            commanded_next: self.current_green,
            fallback: false,
        };

        let in_learning = c + 1 < self.config.learn_cycles;
        if !in_learning {
            match (mu_a, t_mq) {
                (Some(mu_a), Some(t_mq)) if mu_a > 0.0 => {
                    let (mu_e_next, lambda_e_next) = estimate_next_rates(mu_a, lambda_a);
                    let t_mq_next = predict_queue_clearance(lambda_e_next, cycle.red, mu_e_next)?;
                    let t_mf_next = predict_free_flow(t_mq_next, self.config.gamma, self.config.t_s)?;
                    let base = if self.config.correction_uses_green { cycle.green } else { t_mq };
                    let delta_t = correction_term(lambda_a, lambda_e, base);
                    let t_m_next = predict_signal_duration(
                        t_mq_next,
                        t_mf_next,
                        delta_t,
                        self.config.min_green,
                    );
                    let criteria_ok = check_criteria(t_m_next, &self.config);
                    let prediction =
                        Prediction { t_mq_next, t_mf_next, delta_t, t_m_next, criteria_ok };
                    record.prediction = Some(prediction);
                    self.pending = Some(prediction);
                    if criteria_ok {
                        self.current_green = t_m_next;
                    }
                    // On a failed criteria check the previous duration repeats.
                }
                _ => {
                    // No usable measurement. Repeating the previous duration
                    // can deadlock (a too-short green never clears the queue,
                    // so the clearance stays unmeasurable); recover to the
                    // fixed duration instead.
                    record.fallback = true;
                    self.current_green = self.config.t_m_fixed;
                }
            }
        }
        record.commanded_next = self.current_green;
        self.prev_lambda_a = Some(lambda_a);
        self.records.push(record);
        Ok(self.current_green)
    }

    pub fn last_prediction(&self) -> Option<&Prediction> {
        self.pending.as_ref()
    }
}

pub const CYCLE_LOG_HEADER: &str =
    "c,T_m,T_mr,T_mq_measured,lambda_a,mu_a,T_mq_pred,T_mf_pred,delta_t,T_m_next,criteria";

pub fn cycle_log_csv(records: &[SignalCycleRecord]) -> String {
    let mut out = String::from(CYCLE_LOG_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let (tq, tf, dt, tm, crit) = match &r.prediction {
            Some(p) => (
                p.t_mq_next.to_string(),
                p.t_mf_next.to_string(),
                p.delta_t.to_string(),
                p.t_m_next.to_string(),
                p.criteria_ok.to_string(),
            ),
            None => (String::new(), String::new(), String::new(), String::new(), "fallback".into()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.c, r.t_m, r.t_mr, opt(r.t_mq_measured), r.lambda_a, opt(r.mu_a), tq, tf, dt, tm, crit
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference operating point used across the prediction tests.
    const LAMBDA_A: f64 = 0.30;
    const LAMBDA_E: f64 = 0.25;
    const T_MR: f64 = 42.0;
    const MU_E: f64 = 0.9463;
    const T_MQ_PREV: f64 = 10.74;

    #[test]
    fn worked_example_queue_clearance() {
        let t_mq = predict_queue_clearance(LAMBDA_A, T_MR, MU_E).unwrap();
        assert!((t_mq - 13.32).abs() < 0.01, "{t_mq}");
    }

    #[test]
    fn worked_example_free_flow() {
        let t_mf = predict_free_flow(13.32, 2.0, 20.0).unwrap();
        assert!((t_mf - 46.64).abs() < 0.01);
        // Zero clearance degenerates to the stable window alone.
        assert_eq!(predict_free_flow(0.0, 2.0, 20.0).unwrap(), 20.0);
    }

    #[test]
    fn worked_example_correction() {
        let dt = correction_term(LAMBDA_A, LAMBDA_E, T_MQ_PREV);
        assert!((dt - 1.79).abs() < 0.01);
        assert_eq!(correction_term(0.3, 0.3, 10.0), 0.0);
        assert!((correction_term(0.25, 0.30, 10.0) + 2.0).abs() < 1e-12);
        assert_eq!(correction_term(0.0, 0.4, 10.0), 0.0);
    }

    #[test]
    fn worked_example_total() {
        let t_m = predict_signal_duration(13.32, 46.64, 1.79, 5.0);
        assert!((t_m - 61.75).abs() < 0.01);
        assert_eq!(predict_signal_duration(0.0, 20.0, 0.0, 5.0), 20.0);
        // Large negative correction clamps at the floor.
        assert_eq!(predict_signal_duration(1.0, 22.0, -30.0, 5.0), 5.0);
    }

    #[test]
    fn additivity_is_exact_before_clamp() {
        let (a, b, c) = (11.17, 42.9, -3.3);
        assert_eq!(predict_signal_duration(a, b, c, 0.1), a + b + c);
    }

    #[test]
    fn rate_estimates_are_identity() {
        assert_eq!(estimate_next_rates(0.9463, 0.30), (0.9463, 0.30));
        assert_eq!(estimate_next_rates(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn degenerate_service_is_an_error() {
        assert!(matches!(
            predict_queue_clearance(0.3, 42.0, 0.0),
            Err(Error::DegenerateService)
        ));
        assert_eq!(predict_queue_clearance(0.0, 42.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn gamma_constraint() {
        assert!(predict_free_flow(10.0, 1.0, 20.0).is_err());
    }

    #[test]
    fn criteria_boundary() {
        let config = PredictorConfig::default();
        assert!(check_criteria(61.75, &config));
        assert!(!check_criteria(94.0, &config));
        assert!(!check_criteria(100.0, &config));
    }

    #[test]
    fn monotone_in_lambda_e() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..10 {
            let lambda_e = 0.05 * i as f64;
            let t_mq = predict_queue_clearance(lambda_e, T_MR, MU_E).unwrap();
            let t_mf = predict_free_flow(t_mq, 2.0, 20.0).unwrap();
            let t_m = predict_signal_duration(t_mq, t_mf, 0.0, 5.0);
            assert!(t_m > prev);
            prev = t_m;
        }
    }

    #[test]
    fn config_validation_names_the_offender() {
        let config = PredictorConfig { gamma: 0.5, ..Default::default() };
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("gamma") && err.contains("> 1"), "{err}");
    }
}
