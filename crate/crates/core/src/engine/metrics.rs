//! Per-round records, communication accounting and report writers.

use std::io::Write;

use serde::Serialize;

use crate::aggregation::AggregatorKind;
use crate::error::Result;
use crate::NodeId;

pub const METRICS_HEADER: &str =
    "run_id,seed,byz_fraction,round,mean_ter,params_tx_mean,screen_ops_mean,accept_frac,byz_accept_frac,verify_fail,fallback_count";

/// What one node did in one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NodeRoundStats {
    pub node: NodeId,
    pub byzantine: bool,
    pub neighbors: usize,
    pub byz_neighbors: usize,
    /// Neighbors that passed screening, before verification.
    pub screened_in: usize,
    /// Neighbors whose full model was downloaded.
    pub fetched: Vec<NodeId>,
    /// Byzantine neighbors among `fetched`.
    pub byz_fetched: usize,
    /// Neighbors that entered the aggregate.
    pub aggregated: usize,
    pub byz_aggregated: usize,
    pub verify_failures: usize,
    pub fallback: bool,
    pub screen_ops: u64,
    pub agg_ops: u64,
    /// Parameters this node transmitted.
    pub params_tx: u64,
}

/// Parameters a node transmits in one round: sketch-based protocols send
/// `k` numbers to each of `neighbors` and a `d`-vector to each of the
/// `fetched_by` neighbors that accepted it; full-precision protocols send a
/// `d`-vector to every neighbor.
pub fn account_communication(kind: AggregatorKind, neighbors: usize, fetched_by: usize, d: usize, k: usize) -> u64 {
    if kind.is_sketch_based() {
        (k * neighbors + d * fetched_by) as u64
    } else {
        (d * neighbors) as u64
    }
}

/// Fills `params_tx` for every node from who fetched whom this round.
pub fn record_communication(stats: &mut [NodeRoundStats], kind: AggregatorKind, d: usize, k: usize) {
    let mut served = vec![0usize; stats.len()];
    for s in stats.iter() {
        for &j in &s.fetched {
            served[j] += 1;
        }
    }
    for s in stats.iter_mut() {
        s.params_tx = account_communication(kind, s.neighbors, served[s.node], d, k);
    }
}

/// Honest-node aggregates for one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Mean test metric over honest nodes; NaN on rounds that were not
    /// evaluated.
    pub mean_ter: f64,
    pub params_tx_total: u64,
    pub params_tx_mean: f64,
    pub screen_ops_total: u64,
    pub screen_ops_mean: f64,
    pub agg_ops_total: u64,
    pub agg_ops_mean: f64,
    /// Mean over honest nodes with neighbors of screened-in / neighbors.
    pub accept_frac: f64,
    /// Byzantine neighbors aggregated / Byzantine neighbor slots.
    pub byz_accept_frac: f64,
    pub verify_fail: u64,
    pub fallback_count: u64,
    #[serde(skip)]
    pub nodes: Vec<NodeRoundStats>,
}

impl RoundMetrics {
    pub fn from_stats(round: usize, mean_ter: f64, nodes: Vec<NodeRoundStats>) -> Self {
        let honest: Vec<&NodeRoundStats> = nodes.iter().filter(|s| !s.byzantine).collect();
        let h = honest.len().max(1) as f64;
        let params_tx_total: u64 = honest.iter().map(|s| s.params_tx).sum();
        let screen_ops_total: u64 = honest.iter().map(|s| s.screen_ops).sum();
        let agg_ops_total: u64 = honest.iter().map(|s| s.agg_ops).sum();
        let with_neighbors: Vec<&&NodeRoundStats> = honest.iter().filter(|s| s.neighbors > 0).collect();
        let accept_frac = if with_neighbors.is_empty() {
            0.0
        } else {
            with_neighbors
                .iter()
                .map(|s| s.screened_in as f64 / s.neighbors as f64)
                .sum::<f64>()
                / with_neighbors.len() as f64
        };
        let byz_slots: usize = honest.iter().map(|s| s.byz_neighbors).sum();
        let byz_in: usize = honest.iter().map(|s| s.byz_aggregated).sum();
        RoundMetrics {
            round,
            mean_ter,
            params_tx_total,
            params_tx_mean: params_tx_total as f64 / h,
            screen_ops_total,
            screen_ops_mean: screen_ops_total as f64 / h,
            agg_ops_total,
            agg_ops_mean: agg_ops_total as f64 / h,
            accept_frac,
            byz_accept_frac: if byz_slots == 0 { 0.0 } else { byz_in as f64 / byz_slots as f64 },
            verify_fail: honest.iter().map(|s| s.verify_failures as u64).sum(),
            fallback_count: honest.iter().filter(|s| s.fallback).count() as u64,
            nodes,
        }
    }
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    run_id: &'a str,
    seed: u64,
    byz_fraction: f64,
    round: usize,
    mean_ter: f64,
    params_tx_mean: f64,
    screen_ops_mean: f64,
    accept_frac: f64,
    byz_accept_frac: f64,
    verify_fail: u64,
    fallback_count: u64,
}

/// Streams metric rows; the header is written on the first row.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        MetricsWriter {
            inner: csv::WriterBuilder::new().has_headers(true).from_writer(out),
        }
    }

    pub fn write_run(&mut self, run_id: &str, seed: u64, byz_fraction: f64, rounds: &[RoundMetrics]) -> Result<()> {
        for m in rounds {
            self.inner.serialize(MetricsRow {
                run_id,
                seed,
                byz_fraction,
                round: m.round,
                mean_ter: m.mean_ter,
                params_tx_mean: m.params_tx_mean,
                screen_ops_mean: m.screen_ops_mean,
                accept_frac: m.accept_frac,
                byz_accept_frac: m.byz_accept_frac,
                verify_fail: m.verify_fail,
                fallback_count: m.fallback_count,
            })?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn metrics_csv(run_id: &str, seed: u64, byz_fraction: f64, rounds: &[RoundMetrics]) -> Result<String> {
    let mut w = MetricsWriter::new(Vec::new());
    w.write_run(run_id, seed, byz_fraction, rounds)?;
    Ok(String::from_utf8(w.finish()?).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, neighbors: usize, fetched: Vec<NodeId>) -> NodeRoundStats {
        NodeRoundStats {
            node: id,
            neighbors,
            fetched,
            ..Default::default()
        }
    }

    #[test]
    fn outbound_accounting() {
        // Path 0 - 1 - 2; node 1 fetches both ends, node 2 fetches node 1.
        let mut stats = vec![node(0, 1, vec![]), node(1, 2, vec![0, 2]), node(2, 1, vec![1])];
        record_communication(&mut stats, AggregatorKind::Sketchguard, 100, 10);
        assert_eq!(stats[0].params_tx, 10 + 100);
        assert_eq!(stats[1].params_tx, 20 + 100);
        assert_eq!(stats[2].params_tx, 10 + 100);
        record_communication(&mut stats, AggregatorKind::Balance, 100, 10);
        assert_eq!(stats.iter().map(|s| s.params_tx).collect::<Vec<_>>(), vec![100, 200, 100]);
    }

    #[test]
    fn closed_form_counts() {
        assert_eq!(account_communication(AggregatorKind::Sketchguard, 100, 50, 6_600_000, 1000), 330_100_000);
        assert_eq!(account_communication(AggregatorKind::Balance, 100, 50, 6_600_000, 1000), 660_000_000);
        assert_eq!(account_communication(AggregatorKind::Krum, 3, 0, 10, 4), 30);
        assert_eq!(account_communication(AggregatorKind::Sketchguard, 3, 0, 10, 4), 12);
    }

    #[test]
    fn honest_aggregates_skip_byzantine_nodes() {
        let mut a = node(0, 4, vec![]);
        a.screened_in = 2;
        a.byz_neighbors = 2;
        a.byz_aggregated = 1;
        a.verify_failures = 1;
        a.params_tx = 10;
        let mut b = node(1, 2, vec![]);
        b.screened_in = 2;
        b.fallback = true;
        b.params_tx = 20;
        let mut z = node(2, 3, vec![]);
        z.byzantine = true;
        z.params_tx = 1000;
        z.verify_failures = 9;
        let m = RoundMetrics::from_stats(0, 0.5, vec![a, b, z]);
        assert_eq!(m.params_tx_total, 30);
        assert_eq!(m.params_tx_mean, 15.0);
        assert_eq!(m.accept_frac, 0.75);
        assert_eq!(m.byz_accept_frac, 0.5);
        assert_eq!(m.verify_fail, 1);
        assert_eq!(m.fallback_count, 1);
    }

    #[test]
    fn csv_header_is_exact() {
        let m = RoundMetrics::from_stats(3, 0.25, vec![node(0, 0, vec![])]);
        let text = metrics_csv("r", 7, 0.1, &[m]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.next().unwrap(), "r,7,0.1,3,0.25,0.0,0.0,0.0,0.0,0,0");
    }
}
