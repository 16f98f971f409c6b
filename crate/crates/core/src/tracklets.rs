//! Tracklet assembly from cluster centers.
//!
//! A tracklet is the time-stamped path of one cluster label:
//! `<(x_1, y_1, dir_1, t_1), (x_2, y_2, dir_2, t_2), ...>`. Crossings of the
//! Arrival-ROI and Departure-ROI set the `t_a` / `t_d` flags used by the
//! rate estimators; the first crossing wins, re-entries are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dpmm::{ClusterState, Label};
use crate::error::{Error, Result};
use crate::flowmodel::{quantize_direction, roi_crossing_test, Crossing, Roi};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub direction_bin: usize,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub label: Label,
    pub points: Vec<TrackPoint>,
    pub t_a: Option<f64>,
    pub t_d: Option<f64>,
    pub closed: bool,
    /// Index of the first point pair not yet checked for ROI crossings.
    scanned_upto: usize,
}

impl Tracklet {
    fn new(label: Label) -> Self {
        Self { label, points: Vec::new(), t_a: None, t_d: None, closed: false, scanned_upto: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The three tracklet kinds of a signalized unidirectional flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackletKind {
    FreeFlow,
    Queuing,
    QueueClearing,
}

impl TrackletKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackletKind::FreeFlow => "free_flow",
            TrackletKind::Queuing => "queuing",
            TrackletKind::QueueClearing => "queue_clearing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiEvent {
    pub label: Label,
    pub roi: RoiKind,
    pub t: f64,
}

/// Tracklet registry keyed by cluster label. Updated once per frame, single
/// writer.
#[derive(Debug, Clone, Default)]
pub struct TrackletRegistry {
    tracklets: BTreeMap<Label, Tracklet>,
}

impl TrackletRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, label: Label) -> Option<&Tracklet> {
        self.tracklets.get(&label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values()
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    /// Append the center of every live cluster at time `t`, spawning new
    /// tracklets for unseen labels.
    pub fn extend_tracklets(&mut self, clusters: &[ClusterState], t: f64) {
        for cluster in clusters {
            let tracklet =
                self.tracklets.entry(cluster.label).or_insert_with(|| Tracklet::new(cluster.label));
            if tracklet.closed {
                continue;
            }
            if let Some(last) = tracklet.points.last() {
                debug_assert!(t > last.t, "points must be strictly increasing in t");
            }
            let mean = cluster.mean();
            let angle = mean[3].atan2(mean[2]);
            // Direction weight cancels in atan2; 8 bins is only used to
            // requantize the mean direction for the point record.
            let (bin, _) = quantize_direction(angle, 8).unwrap_or((0, (1.0, 0.0)));
            tracklet.points.push(TrackPoint { x: mean[0], y: mean[1], direction_bin: bin, t });
        }
    }

    /// Mark tracklets of retired cluster labels as closed.
    pub fn close_labels(&mut self, labels: &[Label]) {
        for label in labels {
            if let Some(tracklet) = self.tracklets.get_mut(label) {
                tracklet.closed = true;
            }
        }
    }

    pub fn close_all(&mut self) {
        for tracklet in self.tracklets.values_mut() {
            tracklet.closed = true;
        }
    }

    /// Scan newly appended center segments for ROI entries and set t_a / t_d
    /// (first crossing wins). Emits one event per flag set.
    pub fn flag_roi_events(&mut self, arrival: &Roi, departure: &Roi) -> Result<Vec<RoiEvent>> {
        if arrival.overlaps(departure) {
            return Err(Error::Config("arrival and departure ROIs must be disjoint".into()));
        }
        let mut events = Vec::new();
        for tracklet in self.tracklets.values_mut() {
            if tracklet.points.len() < 2 {
                continue;
            }
            let start = tracklet.scanned_upto.max(1);
            for i in start..tracklet.points.len() {
                let prev = &tracklet.points[i - 1];
                let cur = &tracklet.points[i];
                let (p, c) = ((prev.x, prev.y), (cur.x, cur.y));
                if tracklet.t_a.is_none()
                    && roi_crossing_test(p, c, arrival) == Crossing::Entered
                {
                    tracklet.t_a = Some(cur.t);
                    events.push(RoiEvent { label: tracklet.label, roi: RoiKind::Arrival, t: cur.t });
                }
                if tracklet.t_d.is_none()
                    && roi_crossing_test(p, c, departure) == Crossing::Entered
                {
                    tracklet.t_d = Some(cur.t);
                    events.push(RoiEvent {
                        label: tracklet.label,
                        roi: RoiKind::Departure,
                        t: cur.t,
                    });
                }
            }
            tracklet.scanned_upto = tracklet.points.len();
        }
        Ok(events)
    }

    /// Export as `label,t,x,y,bin` rows.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("label,t,x,y,bin\n");
        for tr in self.tracklets.values() {
            for p in &tr.points {
                let _ = writeln!(out, "{},{},{},{},{}", tr.label, p.t, p.x, p.y, p.direction_bin);
            }
        }
        out
    }

    /// Sidecar summary `label,t_a,t_d,kind`.
    pub fn summary_csv(&self, signal: &[(f64, f64)]) -> String {
        let mut out = String::from("label,t_a,t_d,kind\n");
        for tr in self.tracklets.values() {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let kind = if tr.closed {
                classify_tracklet(tr, signal).map(|k| k.as_str()).unwrap_or("unknown")
            } else {
                "open"
            };
            let _ = writeln!(out, "{},{},{},{}", tr.label, fmt(tr.t_a), fmt(tr.t_d), kind);
        }
        out
    }
}

/// Speed below which a tracklet counts as stationary, px/s over a 1 s window.
pub const V_STOP: f64 = 0.5;
const STOP_WINDOW: f64 = 1.0;

/// Classify a closed tracklet against the green intervals
/// `(green_start, green_end)` of the signal schedule.
///
/// QueueClearing: stationary during red and departs after the following green
/// onset. Queuing: stationary during red, never departs. FreeFlow: everything
/// else (crosses without a stationary episode).
pub fn classify_tracklet(tr: &Tracklet, signal: &[(f64, f64)]) -> Result<TrackletKind> {
    if !tr.closed {
        return Err(Error::InvalidInput("tracklet must be closed before classification".into()));
    }
    if signal.is_empty() {
        return Err(Error::Config("signal schedule is unset".into()));
    }
    let in_green = |t: f64| signal.iter().any(|&(s, e)| t >= s && t < e);

    // Find a stationary episode during red: a >= STOP_WINDOW span whose
    // average speed stays below V_STOP while the signal is red.
    let mut stop_during_red: Option<f64> = None;
    for i in 0..tr.points.len() {
        let start = &tr.points[i];
        for j in (i + 1)..tr.points.len() {
            let end = &tr.points[j];
            let dt = end.t - start.t;
            if dt < STOP_WINDOW {
                continue;
            }
            let dist = ((end.x - start.x).powi(2) + (end.y - start.y).powi(2)).sqrt();
            if dist / dt < V_STOP && !in_green(start.t) {
                stop_during_red = Some(start.t);
            }
            break;
        }
        if stop_during_red.is_some() {
            break;
        }
    }

    let Some(stop_t) = stop_during_red else {
        return Ok(TrackletKind::FreeFlow);
    };
    let next_green_start = signal.iter().map(|&(s, _)| s).filter(|&s| s >= stop_t).fold(
        f64::INFINITY,
        f64::min,
    );
    match tr.t_d {
        Some(t_d) if t_d >= next_green_start => Ok(TrackletKind::QueueClearing),
        _ => Ok(TrackletKind::Queuing),
    }
}
