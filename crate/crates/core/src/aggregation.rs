//! Neighbor screening and aggregation rules.
//!
//! Every rule sorts its inputs by node id before touching them, so results
//! do not depend on the order neighbors are presented in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{sketch_distance, Sketch};
use crate::vector::squared_distance;
use crate::{NodeId, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    Dfedavg,
    Krum,
    Balance,
    Sketchguard,
    /// Recognized so configs fail with a clear message; not implemented.
    Ubar,
}

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::Dfedavg => "dfedavg",
            AggregatorKind::Krum => "krum",
            AggregatorKind::Balance => "balance",
            AggregatorKind::Sketchguard => "sketchguard",
            AggregatorKind::Ubar => "ubar",
        }
    }

    pub fn is_sketch_based(&self) -> bool {
        matches!(self, AggregatorKind::Sketchguard)
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `γ·exp(−κt/T)·‖reference‖`
pub fn adaptive_threshold(gamma: f64, kappa: f64, t: usize, total_rounds: usize, ref_norm: f64) -> f64 {
    gamma * (-kappa * t as f64 / total_rounds.max(1) as f64).exp() * ref_norm
}

/// Threshold inflation that absorbs a `(1 ± ε)` squared-distance distortion.
pub fn gamma_eff(gamma: f64, epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    Ok(gamma * ((1.0 + epsilon) / (1.0 - epsilon)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSchedule {
    pub gamma: f64,
    pub kappa: f64,
    pub total_rounds: usize,
}

impl ThresholdSchedule {
    pub fn tau(&self, t: usize, ref_norm: f64) -> f64 {
        adaptive_threshold(self.gamma, self.kappa, t, self.total_rounds, ref_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    /// Accepted neighbors, ascending. Verification failures are removed.
    pub accepted: Vec<NodeId>,
    pub fallback_used: bool,
    pub threshold: f64,
    pub sketch_distances: Vec<(NodeId, f64)>,
    pub full_distances: Vec<(NodeId, f64)>,
    pub verification_failures: Vec<NodeId>,
}

/// Threshold test with nearest-neighbor fallback. `distances` must be
/// sorted by node id; the fallback argmin keeps the lowest id on ties.
fn screen(distances: &[(NodeId, f64)], tau: f64) -> (Vec<NodeId>, bool) {
    let accepted: Vec<NodeId> = distances.iter().filter(|(_, d)| *d <= tau).map(|(j, _)| *j).collect();
    if !accepted.is_empty() || distances.is_empty() {
        return (accepted, false);
    }
    let mut best = distances[0];
    for &(j, d) in &distances[1..] {
        if d < best.1 {
            best = (j, d);
        }
    }
    (vec![best.0], true)
}

fn sorted_by_id<T: Copy>(items: &[(NodeId, T)]) -> Vec<(NodeId, T)> {
    let mut v = items.to_vec();
    v.sort_by_key(|(j, _)| *j);
    v
}

/// Full-precision screening: accept `j` iff `‖w_i − w_j‖ ≤ τ(t, ‖w_i‖)`.
pub fn balance_filter(
    self_model: &ParamVector,
    neighbors: &[(NodeId, &ParamVector)],
    schedule: &ThresholdSchedule,
    t: usize,
) -> FilterOutcome {
    let tau = schedule.tau(t, self_model.norm());
    let full_distances: Vec<(NodeId, f64)> = sorted_by_id(neighbors)
        .into_iter()
        .map(|(j, w)| (j, self_model.distance(w)))
        .collect();
    let (accepted, fallback_used) = screen(&full_distances, tau);
    FilterOutcome {
        accepted,
        fallback_used,
        threshold: tau,
        full_distances,
        ..Default::default()
    }
}

/// Sketch-domain screening: accept `j` iff `‖s_i − s_j‖ ≤ τ(t, ‖s_i‖)`.
pub fn sketchguard_filter(
    self_sketch: &Sketch,
    neighbors: &[(NodeId, &Sketch)],
    schedule: &ThresholdSchedule,
    t: usize,
) -> Result<FilterOutcome> {
    let tau = schedule.tau(t, self_sketch.norm());
    let sketch_distances = sorted_by_id(neighbors)
        .into_iter()
        .map(|(j, s)| Ok((j, sketch_distance(self_sketch, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let (accepted, fallback_used) = screen(&sketch_distances, tau);
    Ok(FilterOutcome {
        accepted,
        fallback_used,
        threshold: tau,
        sketch_distances,
        ..Default::default()
    })
}

/// `α·w_i + (1 − α)/|S|·Σ_{j∈S} w_j`, summing `S` in ascending id order.
pub fn aggregate_mixed(self_model: &ParamVector, accepted: &[(NodeId, &ParamVector)], alpha: f64) -> Result<ParamVector> {
    if accepted.is_empty() {
        if alpha == 1.0 {
            return Ok(self_model.clone());
        }
        return Err(Error::Invariant("aggregation over an empty accepted set with alpha < 1".into()));
    }
    let ordered = sorted_by_id(accepted);
    let mut sum = ParamVector::zeros(self_model.dim());
    for (_, w) in &ordered {
        sum.axpy(1.0, w);
    }
    let scale = (1.0 - alpha) / ordered.len() as f64;
    Ok(ParamVector::new(
        self_model
            .as_slice()
            .iter()
            .zip(sum.as_slice())
            .map(|(&own, &s)| alpha * own + scale * s)
            .collect(),
    ))
}

/// Uniform mean over the node and all of its neighbors.
pub fn dfedavg_aggregate(self_model: &ParamVector, neighbors: &[(NodeId, &ParamVector)]) -> ParamVector {
    let mut sum = self_model.clone();
    for (_, w) in sorted_by_id(neighbors) {
        sum.axpy(1.0, w);
    }
    sum.scaled(1.0 / (neighbors.len() + 1) as f64)
}

/// Krum: the model with the smallest sum of squared distances to its
/// `n − f − 2` nearest peers. Ties go to the lowest id.
pub fn krum_select(models: &[(NodeId, &ParamVector)], f: usize) -> Result<(NodeId, ParamVector)> {
    let n = models.len();
    if n < f + 3 {
        return Err(Error::config("aggregator.krum_f", format!("krum needs at least f + 3 = {} models, got {n}", f + 3)));
    }
    let ordered = sorted_by_id(models);
    let nearest = n - f - 2;
    let mut best: Option<(f64, usize)> = None;
    for (a, (_, wa)) in ordered.iter().enumerate() {
        let mut dists: Vec<f64> = ordered
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, (_, wb))| squared_distance(wa.as_slice(), wb.as_slice()))
            .collect();
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..nearest].iter().sum();
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, a));
        }
    }
    let (_, idx) = best.expect("at least three models");
    Ok((ordered[idx].0, ordered[idx].1.clone()))
}
