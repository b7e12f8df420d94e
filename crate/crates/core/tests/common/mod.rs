#![allow(dead_code)]

use sketchguard::aggregation::AggregatorKind;
use sketchguard::config::{AttackName, Seeds, SimConfig};

pub const FIXTURE_SEEDS: [u64; 3] = [987_654_321, 39_573_295, 32_599_368];

/// Logistic classification over 20 nodes on an Erdős–Rényi graph (p = 0.45),
/// padded to d = 2048 so a unit-variance Gaussian attack lands far outside
/// the honest neighborhood.
pub fn robustness_fixture(aggregator: AggregatorKind, byz_fraction: f64, seed: u64) -> SimConfig {
    let mut c = SimConfig::default();
    c.task.features = 20;
    c.task.classes = 10;
    c.task.padding = 2048 - 210;
    c.task.concentration = 0.5;
    c.task.separation = 1.0;
    c.run.lr = 0.05;
    c.run.threads = 1;
    c.attack.kind = AttackName::Gaussian;
    c.attack.sigma = 1.0;
    c.attack.byz_fraction = byz_fraction;
    c.aggregator.kind = aggregator;
    c.seeds = Seeds::default().with_master(seed);
    c.resolve()
}

/// Linear regression on 10 nodes; one full-batch step per round unless the
/// batch size is lowered.
pub fn quadratic_fixture(nodes: usize) -> SimConfig {
    let mut c = SimConfig::default();
    c.task.kind = sketchguard::learning::TaskKind::Quadratic;
    c.task.features = 10;
    c.task.samples_per_client = 100;
    c.topology.nodes = nodes;
    c.run.local_epochs = 1;
    c.run.batch_size = 100;
    c.run.threads = 1;
    c.resolve()
}

/// Small logistic run for the engine invariants.
pub fn small_fixture(aggregator: AggregatorKind) -> SimConfig {
    let mut c = SimConfig::default();
    c.topology.nodes = 10;
    c.task.features = 8;
    c.task.classes = 4;
    c.task.padding = 100;
    c.task.samples_per_client = 60;
    c.task.test_samples = 120;
    c.task.concentration = 0.5;
    c.run.rounds = 4;
    c.run.local_epochs = 1;
    c.run.batch_size = 16;
    c.run.lr = 0.05;
    c.aggregator.kind = aggregator;
    c.aggregator.sketch_size = Some(32);
    c.attack.kind = AttackName::Gaussian;
    c.attack.byz_fraction = 0.3;
    c.resolve()
}
