//! Randomized self-checks run by `sketchguard check`.
//!
//! Each suite draws its cases from a fixed seed and reports one line per
//! property. These duplicate a subset of the unit tests so an installed
//! binary can be checked without the source tree.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::aggregation::{aggregate_mixed, balance_filter, sketchguard_filter, ThresholdSchedule};
use crate::config::{emit_config, parse_config_str, SimConfig};
use crate::engine::{run_simulation_with, EngineOptions};
use crate::error::{Error, Result};
use crate::hash::{stream_rng, Stream};
use crate::sketch::{SketchParams, Sketcher};
use crate::topology::{build_topology, TopologyKind, TopologySpec};
use crate::ParamVector;

pub const SUITES: [&str; 5] = ["sketch", "topology", "aggregation", "config", "engine"];

const CHECK_SEED: u64 = 0xC4EC_0000_0000_0001;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}::{} {}", self.suite, self.name, self.detail)
    }
}

fn gaussian(rng: &mut impl Rng, d: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn result(suite: &'static str, name: &'static str, outcome: Result<String>, passed: impl FnOnce(&str) -> bool) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            suite,
            name,
            passed: passed(&detail),
            detail,
        },
        Err(e) => CheckResult {
            suite,
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn sketch_suite() -> Vec<CheckResult> {
    let mut rng = stream_rng(CHECK_SEED, Stream::Data, 1, 0);
    let mut worst = 0.0f64;
    let mut deterministic = true;
    let mut verify_ok = true;
    for case in 0..50u64 {
        let d = rng.random_range(1..400);
        let k = rng.random_range(1..=d);
        let sk = Sketcher::new(SketchParams::new(d, k, case).expect("valid params"));
        let a = gaussian(&mut rng, d, 1.0);
        let b = gaussian(&mut rng, d, 1.0);
        let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mut combo = a.scaled(x);
        combo.axpy(y, &b);
        let sa = sk.sketch(&a).expect("dims match");
        let sb = sk.sketch(&b).expect("dims match");
        let sc = sk.sketch(&combo).expect("dims match");
        for ((c, pa), pb) in sc.values().iter().zip(sa.values()).zip(sb.values()) {
            worst = worst.max((c - (x * pa + y * pb)).abs());
        }
        deterministic &= sk.sketch(&a).expect("dims match") == sa;
        verify_ok &= sk.verify(&a, &sa, 1e-5).expect("same family");
    }
    let band = {
        let (d, k, pairs) = (10_000, 2000, 100);
        let mut inside = 0;
        for p in 0..pairs {
            let sk = Sketcher::new(SketchParams::new(d, k, CHECK_SEED ^ p).expect("valid params"));
            let a = gaussian(&mut rng, d, 1.0);
            let b = gaussian(&mut rng, d, 1.0);
            let full = a.distance(&b);
            let sketched = crate::sketch::sketch_distance(&sk.sketch(&a).expect("dims"), &sk.sketch(&b).expect("dims"))
                .expect("same family");
            if (sketched / full - 1.0).abs() <= 0.15 {
                inside += 1;
            }
        }
        inside
    };
    vec![
        CheckResult {
            suite: "sketch",
            name: "distance_band",
            passed: band >= 99,
            detail: format!("{band}/100 pairs within 15% at d=10000, k=2000"),
        },
        CheckResult {
            suite: "sketch",
            name: "linearity",
            passed: worst <= 1e-9,
            detail: format!("max deviation {worst:.3e}"),
        },
        CheckResult {
            suite: "sketch",
            name: "determinism",
            passed: deterministic,
            detail: String::new(),
        },
        CheckResult {
            suite: "sketch",
            name: "self_verification",
            passed: verify_ok,
            detail: String::new(),
        },
    ]
}

fn topology_suite() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let degrees = (|| -> Result<String> {
        for (n, k) in [(20, 16), (35, 32), (100, 96), (21, 4), (30, 7)] {
            let g = build_topology(
                &TopologySpec {
                    kind: TopologyKind::KRegular { degree: k },
                    seed: CHECK_SEED,
                },
                n,
            )?;
            if (0..n).any(|i| g.degree(i) != k) || !g.is_connected() {
                return Err(Error::Invariant(format!("n={n} k={k} is not a connected {k}-regular graph")));
            }
        }
        Ok("5 ladders".into())
    })();
    out.push(result("topology", "k_regular_exact", degrees, |_| true));
    let er = (|| -> Result<String> {
        let mut total = 0.0;
        for s in 0..50 {
            let g = build_topology(
                &TopologySpec {
                    kind: TopologyKind::ErdosRenyi { p: 0.2 },
                    seed: s,
                },
                20,
            )?;
            total += g.mean_degree();
        }
        Ok(format!("{:.3}", total / 50.0))
    })();
    out.push(result("topology", "erdos_renyi_mean_degree", er, |d| {
        d.parse::<f64>().is_ok_and(|m| (m - 3.8).abs() <= 0.5)
    }));
    out
}

fn aggregation_suite() -> Vec<CheckResult> {
    let mut rng = stream_rng(CHECK_SEED, Stream::Data, 2, 0);
    let schedule = ThresholdSchedule {
        gamma: 1.0,
        kappa: 1.0,
        total_rounds: 10,
    };
    let mut within = true;
    let mut invariant = true;
    let mut convex = true;
    for _ in 0..50 {
        let d = rng.random_range(8..64);
        let own = gaussian(&mut rng, d, 1.0);
        let peers: Vec<ParamVector> = (0..6).map(|_| gaussian(&mut rng, d, 0.8)).collect();
        let labelled: Vec<(usize, &ParamVector)> = peers.iter().enumerate().collect();
        let out = balance_filter(&own, &labelled, &schedule, 3);
        if !out.fallback_used {
            within &= out
                .full_distances
                .iter()
                .filter(|(j, _)| out.accepted.contains(j))
                .all(|(_, dist)| *dist <= out.threshold);
        }
        let mut reversed = labelled.clone();
        reversed.reverse();
        invariant &= balance_filter(&own, &reversed, &schedule, 3) == out;

        let sk = Sketcher::new(SketchParams::new(d, d.min(16), 7).expect("valid"));
        let sketches: Vec<_> = peers.iter().map(|w| sk.sketch(w).expect("dims")).collect();
        let own_s = sk.sketch(&own).expect("dims");
        let claimed: Vec<_> = sketches.iter().enumerate().collect();
        let mut claimed_rev = claimed.clone();
        claimed_rev.reverse();
        invariant &= sketchguard_filter(&own_s, &claimed, &schedule, 3).ok() == sketchguard_filter(&own_s, &claimed_rev, &schedule, 3).ok();

        let alpha = rng.random_range(0.0..1.0);
        let mixed = aggregate_mixed(&own, &labelled, alpha).expect("non-empty");
        for (c, v) in mixed.as_slice().iter().enumerate() {
            let lo = peers.iter().map(|w| w[c]).chain([own[c]]).fold(f64::INFINITY, f64::min);
            let hi = peers.iter().map(|w| w[c]).chain([own[c]]).fold(f64::NEG_INFINITY, f64::max);
            convex &= *v >= lo - 1e-12 && *v <= hi + 1e-12;
        }
    }
    vec![
        CheckResult {
            suite: "aggregation",
            name: "accepted_within_threshold",
            passed: within,
            detail: String::new(),
        },
        CheckResult {
            suite: "aggregation",
            name: "permutation_invariance",
            passed: invariant,
            detail: String::new(),
        },
        CheckResult {
            suite: "aggregation",
            name: "convex_combination",
            passed: convex,
            detail: String::new(),
        },
    ]
}

fn config_suite() -> Vec<CheckResult> {
    let c = SimConfig::default().resolve();
    let round_trip = parse_config_str(&emit_config(&c)).map(|p| (p == c).to_string());
    let alpha = match parse_config_str("[aggregator]\nalpha = 1.5\n") {
        Err(Error::Config { path, .. }) => Ok(path),
        Err(e) => Err(e),
        Ok(_) => Ok("accepted".into()),
    };
    vec![
        result("config", "emit_parse_round_trip", round_trip, |s| s == "true"),
        result("config", "alpha_range_reported", alpha, |p| p == "aggregator.alpha"),
    ]
}

fn engine_config() -> SimConfig {
    let mut c = SimConfig::default();
    c.topology.nodes = 8;
    c.task.features = 6;
    c.task.classes = 3;
    c.task.samples_per_client = 40;
    c.task.test_samples = 60;
    c.run.rounds = 3;
    c.run.local_epochs = 1;
    c.run.batch_size = 16;
    c.attack.byz_fraction = 0.25;
    c.attack.kind = crate::config::AttackName::Gaussian;
    c.resolve()
}

fn engine_suite() -> Vec<CheckResult> {
    let threads = (|| -> Result<String> {
        let mut outs = Vec::new();
        for t in [1, 2, 8] {
            let mut c = engine_config();
            c.run.threads = t;
            outs.push(run_simulation_with(&c, &EngineOptions::default())?.final_models);
        }
        Ok((outs[0] == outs[1] && outs[1] == outs[2]).to_string())
    })();
    let order = (|| -> Result<String> {
        let c = engine_config();
        let a = run_simulation_with(&c, &EngineOptions::default())?.final_models;
        let b = run_simulation_with(
            &c,
            &EngineOptions {
                shuffle_order: Some(CHECK_SEED),
                ..Default::default()
            },
        )?
        .final_models;
        Ok((a == b).to_string())
    })();
    vec![
        result("engine", "thread_count_invariance", threads, |s| s == "true"),
        result("engine", "processing_order_invariance", order, |s| s == "true"),
    ]
}

pub fn run_suite(name: &str) -> Result<Vec<CheckResult>> {
    match name {
        "sketch" => Ok(sketch_suite()),
        "topology" => Ok(topology_suite()),
        "aggregation" => Ok(aggregation_suite()),
        "config" => Ok(config_suite()),
        "engine" => Ok(engine_suite()),
        other => Err(Error::config("--suite", format!("unknown suite {other:?}, expected one of {SUITES:?}"))),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    SUITES
        .iter()
        .flat_map(|s| run_suite(s).expect("known suite"))
        .collect()
}
