//! Synchronous round loop.
//!
//! Each round has three barrier-separated phases: every node trains
//! locally, every node publishes its message (model plus sketch), then every
//! node screens, fetches, verifies and aggregates using only what was
//! published in this round. Per-node work runs on a rayon pool and results
//! are collected in node-id order, so output does not depend on the thread
//! count or on the order nodes are processed.
//!
//! Byzantine nodes keep an honest local state and corrupt only what they
//! transmit. With `attack.kind = none` they are therefore indistinguishable
//! from honest nodes.

pub mod bench;
pub mod metrics;
pub mod sweep;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{
    aggregate_mixed, balance_filter, dfedavg_aggregate, gamma_eff, krum_select, sketchguard_filter, AggregatorKind,
    ThresholdSchedule,
};
use crate::attacks::{apply_attack, attacker_message, AttackContext, AttackSpec};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::hash::{stream_rng, Stream};
use crate::learning::{generate_federated_data, initial_model, local_update, Evaluator, FederatedData, SgdSettings, Task};
use crate::sketch::calibration::{default_table_digest, epsilon_hat};
use crate::sketch::{Sketch, SketchParams, Sketcher};
use crate::topology::{build_topology, honest_subgraph_connected, place_byzantine, Graph};
use crate::{NodeId, ParamVector};

pub use metrics::{
    account_communication, metrics_csv, record_communication, MetricsWriter, NodeRoundStats, RoundMetrics, METRICS_HEADER,
};

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    /// Keep every node's model after every round.
    pub record_trajectory: bool,
    /// Process nodes in a seeded random order within each phase.
    pub shuffle_order: Option<u64>,
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: SimConfig,
    pub code_version: String,
    pub dim: usize,
    pub sketch_size: usize,
    pub epsilon_hat: f64,
    pub gamma_eff: Option<f64>,
    pub calibration_digest: String,
    pub metric: String,
    pub byzantine: Vec<NodeId>,
    pub byzantine_neighbors: Vec<usize>,
    pub honest_subgraph_connected: bool,
    pub edge_count: usize,
    pub edge_list_digest: String,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub manifest: RunManifest,
    pub metrics: Vec<RoundMetrics>,
    pub final_models: Vec<ParamVector>,
    /// `trajectory[t][i]` is node `i` after round `t`, when recorded.
    pub trajectory: Option<Vec<Vec<ParamVector>>>,
}

impl SimulationResult {
    pub fn final_ter(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.mean_ter)
    }
}

/// What a node puts on the wire in one round.
struct Message {
    model: ParamVector,
    sketch: Option<Sketch>,
}

/// Fixed per-run state shared by all rounds.
pub struct Simulation {
    config: SimConfig,
    task: Task,
    data: FederatedData,
    graph: Graph,
    byzantine: BTreeSet<NodeId>,
    evaluator: Evaluator,
    sketcher: Option<Sketcher>,
    schedule: ThresholdSchedule,
    attack: AttackSpec,
    sgd: SgdSettings,
    init: ParamVector,
    manifest: RunManifest,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let config = config.clone().resolve();
        config.validate()?;
        let task = config.task.task();
        let d = task.dim();
        let n = config.topology.nodes;
        let data = generate_federated_data(&config.data_spec())?;
        let graph = build_topology(&config.topology_spec(), n)?;
        let byzantine = place_byzantine(n, config.attack.byz_fraction, config.seeds.byzantine);
        let connected = honest_subgraph_connected(&graph, &byzantine);
        if !connected {
            log::warn!("honest subgraph is disconnected; convergence guarantees do not apply");
        }
        let init = initial_model(&task, config.seeds.init);
        let evaluator = Evaluator::new(&task, &data, &init, config.run.per_client_test)?;
        let k = config.sketch_size();
        let sketcher = if config.aggregator.kind.is_sketch_based() {
            Some(Sketcher::new(SketchParams::new(d, k, config.seeds.sketch)?))
        } else {
            None
        };
        let eps = epsilon_hat(k);
        let manifest = RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            dim: d,
            sketch_size: k,
            epsilon_hat: eps,
            gamma_eff: gamma_eff(config.aggregator.gamma, eps).ok(),
            calibration_digest: default_table_digest(),
            metric: evaluator.metric_name().to_string(),
            byzantine: byzantine.iter().copied().collect(),
            byzantine_neighbors: (0..n)
                .map(|i| graph.neighbors(i).iter().filter(|j| byzantine.contains(j)).count())
                .collect(),
            honest_subgraph_connected: connected,
            edge_count: graph.edge_count(),
            edge_list_digest: graph.edge_list_digest(),
            config: config.clone(),
        };
        Ok(Simulation {
            schedule: config.schedule(),
            attack: config.attack.spec(),
            sgd: config.sgd(),
            config,
            task,
            data,
            graph,
            byzantine,
            evaluator,
            sketcher,
            init,
            manifest,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn byzantine(&self) -> &BTreeSet<NodeId> {
        &self.byzantine
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn data(&self) -> &FederatedData {
        &self.data
    }

    pub fn run(&self, options: &EngineOptions) -> Result<SimulationResult> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.run.threads)
            .build()
            .map_err(|e| Error::config("run.threads", e.to_string()))?;
        pool.install(|| self.run_rounds(options))
    }

    fn node_order(&self, options: &EngineOptions, round: usize, phase: u64) -> Vec<NodeId> {
        let mut order: Vec<NodeId> = (0..self.config.topology.nodes).collect();
        if let Some(seed) = options.shuffle_order {
            order.shuffle(&mut stream_rng(seed, Stream::Order, round as u64, phase));
        }
        order
    }

    /// Runs `f` for every node in `order` and returns results by node id.
    fn per_node<T: Send>(&self, order: &[NodeId], f: impl Fn(NodeId) -> Result<T> + Sync) -> Result<Vec<T>> {
        let mut out: Vec<(NodeId, T)> = order
            .par_iter()
            .map(|&i| f(i).map(|v| (i, v)))
            .collect::<Result<Vec<_>>>()?;
        out.sort_by_key(|(i, _)| *i);
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }

    fn run_rounds(&self, options: &EngineOptions) -> Result<SimulationResult> {
        let n = self.config.topology.nodes;
        let rounds = self.config.run.rounds;
        let mut models = vec![self.init.clone(); n];
        let mut metrics = Vec::with_capacity(rounds);
        let mut trajectory = options.record_trajectory.then(Vec::new);
        for t in 0..rounds {
            let half = self.per_node(&self.node_order(options, t, 0), |i| {
                let mut rng = stream_rng(self.config.seeds.training, Stream::Training, i as u64, t as u64);
                local_update(&self.task, &models[i], &self.data.clients[i], &self.sgd, &mut rng)
            })?;
            let own_sketches = match &self.sketcher {
                Some(sk) => Some(self.per_node(&self.node_order(options, t, 1), |i| sk.sketch(&half[i]))?),
                None => None,
            };
            let messages = self.publish(t, &models, &half, own_sketches.as_deref(), options)?;
            let steps = self.per_node(&self.node_order(options, t, 2), |i| {
                self.aggregate_node(i, t, &half, own_sketches.as_ref().map(|s| &s[i]), &messages)
            })?;
            let (next, mut stats): (Vec<ParamVector>, Vec<NodeRoundStats>) = steps.into_iter().unzip();
            record_communication(&mut stats, self.config.aggregator.kind, self.task.dim(), self.config.sketch_size());
            models = next;
            let evaluate = t % self.config.run.eval_stride == 0 || t + 1 == rounds;
            let mean_ter = if evaluate { self.mean_honest_metric(&models) } else { f64::NAN };
            metrics.push(RoundMetrics::from_stats(t, mean_ter, stats));
            if let Some(traj) = trajectory.as_mut() {
                traj.push(models.clone());
            }
        }
        Ok(SimulationResult {
            manifest: self.manifest.clone(),
            metrics,
            final_models: models,
            trajectory,
        })
    }

    fn publish(
        &self,
        t: usize,
        before: &[ParamVector],
        half: &[ParamVector],
        own_sketches: Option<&[Sketch]>,
        options: &EngineOptions,
    ) -> Result<Vec<Message>> {
        let honest: Vec<NodeId> = (0..half.len()).filter(|i| !self.byzantine.contains(i)).collect();
        let observed: Vec<NodeId> = if honest.is_empty() { (0..half.len()).collect() } else { honest };
        let ctx = AttackContext::from_honest(
            t,
            &observed.iter().map(|&i| &before[i]).collect::<Vec<_>>(),
            &observed.iter().map(|&i| &half[i]).collect::<Vec<_>>(),
        )
        .ok_or_else(|| Error::Invariant("no nodes to observe".into()))?;
        self.per_node(&self.node_order(options, t, 3), |i| {
            let own_sketch = own_sketches.map(|s| s[i].clone());
            if !self.byzantine.contains(&i) {
                return Ok(Message {
                    model: half[i].clone(),
                    sketch: own_sketch,
                });
            }
            let mut rng = stream_rng(self.config.seeds.attack, Stream::Attack, i as u64, t as u64);
            let crafted = apply_attack(&self.attack, &half[i], &ctx, &mut rng);
            match &self.sketcher {
                Some(sk) => {
                    let (sketch, model) = attacker_message(&self.attack, &half[i], crafted, sk)?;
                    Ok(Message {
                        model,
                        sketch: Some(sketch),
                    })
                }
                None => Ok(Message {
                    model: crafted,
                    sketch: None,
                }),
            }
        })
    }

    fn aggregate_node(
        &self,
        i: NodeId,
        t: usize,
        half: &[ParamVector],
        own_sketch: Option<&Sketch>,
        messages: &[Message],
    ) -> Result<(ParamVector, NodeRoundStats)> {
        let d = self.task.dim() as u64;
        let neighbors = self.graph.neighbors(i);
        let own = &half[i];
        let alpha = self.config.aggregator.alpha;
        let is_byz = |j: &NodeId| self.byzantine.contains(j);
        let mut stats = NodeRoundStats {
            node: i,
            byzantine: self.byzantine.contains(&i),
            neighbors: neighbors.len(),
            byz_neighbors: neighbors.iter().filter(|j| is_byz(j)).count(),
            ..Default::default()
        };
        let models_of = |ids: &[NodeId]| -> Vec<(NodeId, &ParamVector)> {
            ids.iter().map(|&j| (j, &messages[j].model)).collect()
        };
        let finish = |stats: &mut NodeRoundStats, used: &[NodeId]| {
            stats.aggregated = used.len();
            stats.byz_aggregated = used.iter().filter(|j| is_byz(j)).count();
            stats.byz_fetched = stats.fetched.iter().filter(|j| is_byz(j)).count();
        };
        let next = match self.config.aggregator.kind {
            AggregatorKind::Dfedavg => {
                stats.fetched = neighbors.to_vec();
                stats.screened_in = neighbors.len();
                stats.agg_ops = d * neighbors.len() as u64;
                finish(&mut stats, neighbors);
                dfedavg_aggregate(own, &models_of(neighbors))
            }
            AggregatorKind::Krum => {
                stats.fetched = neighbors.to_vec();
                let mut pool = models_of(neighbors);
                pool.push((i, own));
                let m = pool.len();
                stats.screen_ops = d * (m * (m - 1) / 2) as u64;
                let chosen = if m < 3 {
                    None
                } else {
                    let f = self
                        .config
                        .aggregator
                        .krum_f
                        .unwrap_or_else(|| (self.config.attack.byz_fraction * m as f64).round() as usize)
                        .min(m - 3);
                    Some(krum_select(&pool, f)?)
                };
                match chosen {
                    Some((j, w)) if j != i => {
                        stats.screened_in = 1;
                        stats.agg_ops = d;
                        finish(&mut stats, &[j]);
                        w
                    }
                    _ => {
                        finish(&mut stats, &[]);
                        own.clone()
                    }
                }
            }
            AggregatorKind::Balance => {
                stats.fetched = neighbors.to_vec();
                let outcome = balance_filter(own, &models_of(neighbors), &self.schedule, t);
                stats.screened_in = outcome.accepted.len();
                stats.fallback = outcome.fallback_used;
                stats.screen_ops = d * neighbors.len() as u64;
                stats.agg_ops = d * outcome.accepted.len() as u64;
                finish(&mut stats, &outcome.accepted);
                self.mix(own, &models_of(&outcome.accepted), alpha)?
            }
            AggregatorKind::Sketchguard => {
                let sketcher = self.sketcher.as_ref().expect("sketch-based run has a sketcher");
                let own_sketch = own_sketch.expect("sketch-based run has own sketches");
                let claimed: Vec<(NodeId, &Sketch)> = neighbors
                    .iter()
                    .map(|&j| (j, messages[j].sketch.as_ref().expect("sketch-based message")))
                    .collect();
                let outcome = sketchguard_filter(own_sketch, &claimed, &self.schedule, t)?;
                stats.screened_in = outcome.accepted.len();
                stats.fallback = outcome.fallback_used;
                stats.screen_ops = (sketcher.params().width() * neighbors.len()) as u64;
                stats.fetched = outcome.accepted.clone();
                let mut kept = Vec::with_capacity(outcome.accepted.len());
                for &j in &outcome.accepted {
                    let msg = &messages[j];
                    let ok = !self.config.aggregator.verify
                        || sketcher.verify(
                            &msg.model,
                            msg.sketch.as_ref().expect("sketch-based message"),
                            self.config.aggregator.rel_tol,
                        )?;
                    if ok {
                        kept.push(j);
                    } else {
                        stats.verify_failures += 1;
                    }
                }
                if self.config.aggregator.verify {
                    stats.agg_ops += d * outcome.accepted.len() as u64;
                }
                stats.agg_ops += d * kept.len() as u64;
                finish(&mut stats, &kept);
                self.mix(own, &models_of(&kept), alpha)?
            }
            AggregatorKind::Ubar => {
                return Err(Error::config("aggregator.kind", "ubar is recognized but not implemented"));
            }
        };
        Ok((next, stats))
    }

    /// Mixing with the convention that an empty set keeps the local model.
    fn mix(&self, own: &ParamVector, accepted: &[(NodeId, &ParamVector)], alpha: f64) -> Result<ParamVector> {
        if accepted.is_empty() {
            return Ok(own.clone());
        }
        aggregate_mixed(own, accepted, alpha)
    }

    fn mean_honest_metric(&self, models: &[ParamVector]) -> f64 {
        let honest: Vec<NodeId> = (0..models.len()).filter(|i| !self.byzantine.contains(i)).collect();
        if honest.is_empty() {
            return f64::NAN;
        }
        let values: Vec<f64> = honest.par_iter().map(|&i| self.evaluator.evaluate(i, &models[i])).collect();
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimulationResult> {
    Simulation::new(config)?.run(&EngineOptions::default())
}

pub fn run_simulation_with(config: &SimConfig, options: &EngineOptions) -> Result<SimulationResult> {
    Simulation::new(config)?.run(options)
}
