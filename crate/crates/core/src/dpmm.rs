//! Streaming temporal Dirichlet process mixture model.
//!
//! Observations are assigned to clusters by a single Gibbs sweep per frame.
//! Cluster parameters carried over from frame t-1 act as the prior for frame
//! t, which is what keeps labels stable across frames and turns clusters into
//! tracklets. The conditional for one observation is
//!
//! ```text
//! p(z_i = k)     ∝ exp(-ED(x_i, mean_k)) * n_k / (n + alpha)   existing k
//! p(z_i = K + 1) ∝ alpha / (n + alpha)                         new cluster
//! ```
//!
//! with counts and totals taken excluding the observation's own current
//! assignment, and ED the Euclidean distance in the feature space
//! (x, y, w*cos, w*sin). The direction weight w converts the unit direction
//! vector to a pixel-comparable scale.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flowmodel::{FrameBatch, ObservationPoint};

pub type Label = u64;

pub const FEATURE_DIM: usize = 4;

/// Running parameters of one live cluster.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub label: Label,
    sum: [f64; FEATURE_DIM],
    sum_sq: [f64; FEATURE_DIM],
    pub count: usize,
    pub last_update_frame: u64,
}

impl ClusterState {
    fn new(label: Label, features: [f64; FEATURE_DIM], frame: u64) -> Self {
        let mut sum_sq = [0.0; FEATURE_DIM];
        for (s, f) in sum_sq.iter_mut().zip(features) {
            *s = f * f;
        }
        Self { label, sum: features, sum_sq, count: 1, last_update_frame: frame }
    }

    pub fn mean(&self) -> [f64; FEATURE_DIM] {
        let n = self.count as f64;
        let mut m = self.sum;
        for v in &mut m {
            *v /= n;
        }
        m
    }

    /// Per-dimension running variance. Diagnostic only; the assignment rule
    /// uses the distance to the mean.
    pub fn covariance_diag(&self) -> [f64; FEATURE_DIM] {
        let n = self.count as f64;
        let mut var = [0.0; FEATURE_DIM];
        for d in 0..FEATURE_DIM {
            let mean = self.sum[d] / n;
            var[d] = (self.sum_sq[d] / n - mean * mean).max(0.0);
        }
        var
    }

    pub fn center(&self) -> (f64, f64) {
        let m = self.mean();
        (m[0], m[1])
    }

    fn add(&mut self, features: [f64; FEATURE_DIM]) {
        for d in 0..FEATURE_DIM {
            self.sum[d] += features[d];
            self.sum_sq[d] += features[d] * features[d];
        }
        self.count += 1;
    }

    fn remove(&mut self, features: [f64; FEATURE_DIM]) {
        for d in 0..FEATURE_DIM {
            self.sum[d] -= features[d];
            self.sum_sq[d] -= features[d] * features[d];
        }
        self.count -= 1;
    }
}

/// One observation slot. Slot i carries the latest assignment of the i-th
/// observation of a frame; when frame t has fewer observations than frame
/// t-1, the surplus slots keep their old assignments until their clusters
/// are retired.
#[derive(Debug, Clone)]
struct Slot {
    label: Label,
    features: [f64; FEATURE_DIM],
}

/// Full model state across frames.
#[derive(Debug, Clone)]
pub struct ModelState {
    clusters: Vec<ClusterState>,
    alpha: f64,
    direction_weight: f64,
    slots: Vec<Option<Slot>>,
    total_count: usize,
    pub frame: u64,
    next_label: Label,
    rng: ChaCha8Rng,
}

impl ModelState {
    pub fn new(alpha: f64, direction_weight: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            clusters: Vec::new(),
            alpha,
            direction_weight,
            slots: Vec::new(),
            total_count: 0,
            frame: 0,
            next_label: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn clusters(&self) -> &[ClusterState] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_count(&self) -> usize {
        self.total_count
    }

    pub fn features_of(&self, obs: &ObservationPoint) -> [f64; FEATURE_DIM] {
        [
            obs.x,
            obs.y,
            self.direction_weight * obs.direction_vec.0,
            self.direction_weight * obs.direction_vec.1,
        ]
    }

    /// Conditional assignment probabilities for one observation against the
    /// current state: one entry per live cluster, in cluster order, plus the
    /// new-cluster entry last. Normalized to sum to 1.
    pub fn conditional_assignment_probabilities(
        &self,
        obs: &ObservationPoint,
    ) -> Result<Vec<f64>> {
        let features = self.features_of(obs);
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation features".into()));
        }
        Ok(assignment_weights(&self.clusters, self.total_count, self.alpha, &features))
    }

    /// One Gibbs sweep over a frame. Returns the label sampled for each
    /// observation, in stream order.
    pub fn gibbs_frame_sweep(&mut self, batch: &FrameBatch) -> Result<Vec<Label>> {
        if batch.frame < self.frame {
            return Err(Error::InvalidInput(format!(
                "frame {} precedes model frame {}",
                batch.frame, self.frame
            )));
        }
        let mut labels = Vec::with_capacity(batch.observations.len());
        for (slot_idx, obs) in batch.observations.iter().enumerate() {
            let features = self.features_of(obs);
            if features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite observation features".into()));
            }

            // The -i convention: drop this slot's previous assignment before
            // evaluating the conditional. A cluster emptied by the removal
            // vanishes.
            if slot_idx < self.slots.len() {
                if let Some(prev) = self.slots[slot_idx].take() {
                    self.release(prev);
                }
            }

            let weights =
                assignment_weights(&self.clusters, self.total_count, self.alpha, &features);
            let choice = sample_index(&mut self.rng, &weights);

            let label = if choice == self.clusters.len() {
                let label = self.next_label;
                self.next_label += 1;
                self.clusters.push(ClusterState::new(label, features, batch.frame));
                label
            } else {
                let cluster = &mut self.clusters[choice];
                cluster.add(features);
                cluster.last_update_frame = batch.frame;
                cluster.label
            };
            self.total_count += 1;

            if slot_idx < self.slots.len() {
                self.slots[slot_idx] = Some(Slot { label, features });
            } else {
                self.slots.push(Some(Slot { label, features }));
            }
            labels.push(label);
        }
        self.frame = batch.frame;
        Ok(labels)
    }

    /// Remove clusters not updated within `ttl` frames and free the slots
    /// still pointing at them. Returns the retired labels.
    pub fn retire_stale_clusters(&mut self, ttl: u64) -> Vec<Label> {
        debug_assert!(ttl >= 1);
        let cutoff = self.frame.saturating_sub(ttl);
        let stale: Vec<Label> = self
            .clusters
            .iter()
            .filter(|c| c.last_update_frame < cutoff)
            .map(|c| c.label)
            .collect();
        if stale.is_empty() {
            return stale;
        }
        self.clusters.retain(|c| c.last_update_frame >= cutoff);
        for slot in self.slots.iter_mut() {
            if let Some(s) = slot {
                if stale.contains(&s.label) {
                    self.total_count -= 1;
                    *slot = None;
                }
            }
        }
        stale
    }

    fn release(&mut self, slot: Slot) {
        self.total_count -= 1;
        if let Some(pos) = self.clusters.iter().position(|c| c.label == slot.label) {
            if self.clusters[pos].count == 1 {
                self.clusters.remove(pos);
            } else {
                self.clusters[pos].remove(slot.features);
            }
        }
    }

    /// `frame,label,mean_x,mean_y,count` rows for offline inspection.
    pub fn dump_csv_rows(&self, out: &mut String) {
        for c in &self.clusters {
            let (x, y) = c.center();
            let _ = writeln!(out, "{},{},{},{},{}", self.frame, c.label, x, y, c.count);
        }
    }

    #[cfg(test)]
    pub(crate) fn check_invariants(&self) {
        let sum: usize = self.clusters.iter().map(|c| c.count).sum();
        assert_eq!(sum, self.total_count, "cluster counts must sum to total_count");
        assert!(self.clusters.iter().all(|c| c.count >= 1));
        // Mean must equal the arithmetic mean of the assigned slots.
        for cluster in &self.clusters {
            let mut sum = [0.0; FEATURE_DIM];
            let mut n = 0usize;
            for slot in self.slots.iter().flatten() {
                if slot.label == cluster.label {
                    for d in 0..FEATURE_DIM {
                        sum[d] += slot.features[d];
                    }
                    n += 1;
                }
            }
            assert_eq!(n, cluster.count);
            let mean = cluster.mean();
            for d in 0..FEATURE_DIM {
                assert!((mean[d] - sum[d] / n as f64).abs() < 1e-6);
            }
        }
    }
}

fn euclidean(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Normalized conditional weights: one per cluster, then the new-cluster
/// branch. With no clusters this is the forced [1.0].
fn assignment_weights(
    clusters: &[ClusterState],
    total: usize,
    alpha: f64,
    features: &[f64; FEATURE_DIM],
) -> Vec<f64> {
    let denom = total as f64 + alpha;
    let mut weights: Vec<f64> = clusters
        .iter()
        .map(|c| (-euclidean(features, &c.mean())).exp() * c.count as f64 / denom)
        .collect();
    weights.push(alpha / denom);
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    weights
}

fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmodel::quantize_direction;

    fn obs(frame: u64, x: f64, y: f64) -> ObservationPoint {
        let (bin, vec) = quantize_direction(0.0, 8).unwrap();
        ObservationPoint { frame, x, y, direction_bin: bin, direction_vec: vec }
    }

    fn batch(frame: u64, points: &[(f64, f64)]) -> FrameBatch {
        FrameBatch {
            frame,
            observations: points.iter().map(|&(x, y)| obs(frame, x, y)).collect(),
        }
    }

    #[test]
    fn empty_model_forces_new_cluster() {
        let model = ModelState::new(3e-7, 10.0, 1).unwrap();
        let p = model.conditional_assignment_probabilities(&obs(0, 5.0, 5.0)).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn matching_cluster_dominates_for_tiny_alpha() {
        let alpha = 3e-7;
        let mut model = ModelState::new(alpha, 10.0, 1).unwrap();
        model.gibbs_frame_sweep(&batch(0, &[(5.0, 5.0)])).unwrap();
        // Probe at exactly the cluster mean with n_k = 1:
        // p(existing) = (1/(1+a)) / (1/(1+a) + a/(1+a)) = 1/(1+a).
        let p = model.conditional_assignment_probabilities(&obs(1, 5.0, 5.0)).unwrap();
        let expected = 1.0 / (1.0 + alpha);
        assert!((p[0] - expected).abs() < 1e-12, "{} vs {}", p[0], expected);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equidistant_clusters_get_equal_probability() {
        let mut model = ModelState::new(0.5, 10.0, 7).unwrap();
        // Two well separated singleton clusters.
        model.gibbs_frame_sweep(&batch(0, &[(0.0, 0.0)])).unwrap();
        model.gibbs_frame_sweep(&FrameBatch {
            frame: 1,
            observations: vec![obs(1, 0.0, 0.0), obs(1, 20.0, 0.0)],
        }).unwrap();
        assert_eq!(model.cluster_count(), 2);
        let p = model.conditional_assignment_probabilities(&obs(2, 10.0, 0.0)).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p[0] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn empty_frame_only_advances_the_clock() {
        let mut model = ModelState::new(3e-7, 10.0, 1).unwrap();
        model.gibbs_frame_sweep(&batch(0, &[(5.0, 5.0), (7.0, 5.0)])).unwrap();
        let before_clusters = model.cluster_count();
        let before_total = model.total_count();
        model.gibbs_frame_sweep(&FrameBatch::new(3)).unwrap();
        assert_eq!(model.frame, 3);
        assert_eq!(model.cluster_count(), before_clusters);
        assert_eq!(model.total_count(), before_total);
    }

    #[test]
    fn single_blob_keeps_one_dominant_label() {
        let mut model = ModelState::new(3e-7, 10.0, 42).unwrap();
        let mut per_frame_modal: Vec<Label> = Vec::new();
        for frame in 0..50u64 {
            let base = frame as f64 * 2.0;
            let mut b = FrameBatch::new(frame);
            for gx in 0..4 {
                for gy in 0..4 {
                    b.observations.push(obs(
                        frame,
                        base + gx as f64 * 5.0,
                        50.0 + gy as f64 * 5.0,
                    ));
                }
            }
            let labels = model.gibbs_frame_sweep(&b).unwrap();
            model.retire_stale_clusters(30);
            let mut counts = std::collections::BTreeMap::new();
            for l in labels {
                *counts.entry(l).or_insert(0usize) += 1;
            }
            per_frame_modal.push(*counts.iter().max_by_key(|(_, &c)| c).unwrap().0);
            model.check_invariants();
        }
        let mut coverage = std::collections::BTreeMap::new();
        for l in &per_frame_modal {
            *coverage.entry(*l).or_insert(0usize) += 1;
        }
        let best = coverage.values().max().unwrap();
        assert!(
            *best as f64 >= 0.95 * per_frame_modal.len() as f64,
            "dominant label covers only {best}/{} frames",
            per_frame_modal.len()
        );
    }

    #[test]
    fn larger_alpha_never_yields_fewer_clusters() {
        let run = |alpha: f64, seed: u64| -> usize {
            let mut model = ModelState::new(alpha, 10.0, seed).unwrap();
            for frame in 0..30u64 {
                let base = frame as f64;
                let mut b = FrameBatch::new(frame);
                for g in 0..12 {
                    b.observations.push(obs(frame, base + (g % 4) as f64 * 6.0, (g / 4) as f64 * 6.0));
                }
                model.gibbs_frame_sweep(&b).unwrap();
                model.retire_stale_clusters(30);
            }
            model.cluster_count()
        };
        for seed in 0..5 {
            assert!(run(0.5, seed) >= run(3e-7, seed));
        }
    }

    #[test]
    fn retirement_closes_exactly_the_idle_cluster() {
        let mut model = ModelState::new(3e-7, 10.0, 9).unwrap();
        model.gibbs_frame_sweep(&batch(0, &[(0.0, 0.0), (100.0, 100.0)])).unwrap();
        assert_eq!(model.cluster_count(), 2);
        let idle_label = model.clusters()[1].label;
        // Keep feeding only the first blob; slot count shrinks to 1 so the
        // second cluster goes stale.
        for frame in 1..=5u64 {
            model.gibbs_frame_sweep(&batch(frame, &[(0.0, 0.0)])).unwrap();
        }
        assert!(model.retire_stale_clusters(10).is_empty());
        let closed = model.retire_stale_clusters(4);
        assert_eq!(closed, vec![idle_label]);
        model.check_invariants();
    }

    #[test]
    fn probabilities_always_normalized() {
        let mut model = ModelState::new(0.3, 10.0, 5).unwrap();
        for frame in 0..10u64 {
            let b = batch(frame, &[(1.0, 2.0), (30.0, 2.0), (60.0, 40.0)]);
            model.gibbs_frame_sweep(&b).unwrap();
            let p = model
                .conditional_assignment_probabilities(&obs(frame, 15.0, 15.0))
                .unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn same_seed_same_labels() {
        let run = |seed: u64| {
            let mut model = ModelState::new(0.2, 10.0, seed).unwrap();
            let mut all = Vec::new();
            // Points close enough that assignments stay genuinely stochastic.
            for frame in 0..20u64 {
                let b = batch(frame, &[(1.0, 2.0), (4.0, 2.0), (2.0, 6.0)]);
                all.extend(model.gibbs_frame_sweep(&b).unwrap());
            }
            all
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}
