//! Cost scaling benches: model dimension at fixed degree, and degree at
//! fixed dimension. Counters are exact operation and parameter counts; wall
//! clock goes to the log only.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::aggregation::AggregatorKind;
use crate::config::{SimConfig, TopologyName};
use crate::error::{Error, Result};

use super::run_simulation;

pub const BENCH_HEADER: &str = "mode,x_value,aggregator,screen_ops,agg_ops,params_tx";

/// Model sizes of the reference architectures, from small CNNs to
/// ResNet-scale networks.
pub const REFERENCE_DIMS: [usize; 5] = [220_318, 848_382, 6_603_710, 26_154_814, 60_271_678];

/// (degree, nodes) pairs of the degree bench.
pub const DEGREE_LADDER: [(usize, usize); 5] = [(16, 20), (32, 35), (96, 100), (154, 155), (299, 300)];

/// Upper bound on `nodes * d` for one bench point.
pub const DEFAULT_MAX_PARAMS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Dims,
    Degree,
}

impl std::str::FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dims" => Ok(BenchMode::Dims),
            "degree" => Ok(BenchMode::Degree),
            other => Err(Error::config("--mode", format!("unknown bench mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Dimensions (dims mode) or (degree, nodes) pairs (degree mode).
    pub dims: Vec<usize>,
    pub degrees: Vec<(usize, usize)>,
    pub aggregators: Vec<AggregatorKind>,
    pub rounds: usize,
    pub local_epochs: usize,
    pub max_params: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            dims: REFERENCE_DIMS[..3].iter().map(|d| d / 100).collect(),
            degrees: DEGREE_LADDER[..3].to_vec(),
            aggregators: vec![AggregatorKind::Sketchguard, AggregatorKind::Balance],
            rounds: 3,
            local_epochs: 1,
            max_params: DEFAULT_MAX_PARAMS,
        }
    }
}

/// Per-node means over all rounds, plus the exact totals behind them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub x_value: usize,
    pub aggregator: AggregatorKind,
    pub screen_ops: f64,
    pub agg_ops: f64,
    pub params_tx: f64,
    #[serde(skip)]
    pub screen_ops_total: u64,
    #[serde(skip)]
    pub agg_ops_total: u64,
    #[serde(skip)]
    pub params_tx_total: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Set when a point exceeded the parameter budget; rows hold the points
    /// completed before it.
    pub aborted: Option<String>,
}

/// One bench configuration per ladder point, before the aggregator is set.
fn points(mode: BenchMode, base: &SimConfig, options: &BenchOptions) -> Result<Vec<(usize, SimConfig)>> {
    let mut base = base.clone();
    base.run.rounds = options.rounds;
    base.run.local_epochs = options.local_epochs;
    // Fix k across the ladder from the base model.
    base.aggregator.sketch_size = Some(base.sketch_size());
    let mut out = Vec::new();
    match mode {
        BenchMode::Dims => {
            let mut probe = base.clone();
            probe.task.padding = 0;
            let active = probe.dim();
            for &d in &options.dims {
                if d < active {
                    return Err(Error::config("task.padding", format!("bench dimension {d} is below the active model size {active}")));
                }
                let mut c = base.clone();
                c.task.padding = d - active;
                out.push((d, c));
            }
        }
        BenchMode::Degree => {
            for &(degree, nodes) in &options.degrees {
                let mut c = base.clone();
                c.topology.kind = TopologyName::KRegular;
                c.topology.degree = degree;
                c.topology.nodes = nodes;
                out.push((degree, c));
            }
        }
    }
    Ok(out)
}

pub fn bench(mode: BenchMode, base: &SimConfig, options: &BenchOptions) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for (x, config) in points(mode, base, options)? {
        let load = config.topology.nodes * config.dim();
        if load > options.max_params {
            let msg = format!(
                "point x={x} needs {load} resident parameters, above the budget of {}",
                options.max_params
            );
            log::warn!("bench aborted: {msg}");
            report.aborted = Some(msg);
            return Ok(report);
        }
        for &agg in &options.aggregators {
            let mut c = config.clone();
            c.aggregator.kind = agg;
            let started = Instant::now();
            let result = run_simulation(&c)?;
            log::info!("bench {mode:?} x={x} {agg}: {:.3}s", started.elapsed().as_secs_f64());
            let honest = (c.topology.nodes - result.manifest.byzantine.len()).max(1) as u64;
            let slots = honest * result.metrics.len() as u64;
            let screen_ops_total: u64 = result.metrics.iter().map(|m| m.screen_ops_total).sum();
            let agg_ops_total: u64 = result.metrics.iter().map(|m| m.agg_ops_total).sum();
            let params_tx_total: u64 = result.metrics.iter().map(|m| m.params_tx_total).sum();
            report.rows.push(BenchRow {
                mode,
                x_value: x,
                aggregator: agg,
                screen_ops: screen_ops_total as f64 / slots as f64,
                agg_ops: agg_ops_total as f64 / slots as f64,
                params_tx: params_tx_total as f64 / slots as f64,
                screen_ops_total,
                agg_ops_total,
                params_tx_total,
            });
        }
    }
    Ok(report)
}

pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<W> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}
