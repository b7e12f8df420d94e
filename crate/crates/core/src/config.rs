//! Sectioned TOML configuration.
//!
//! Every key is optional; omitted keys take the defaults below. Unknown keys
//! and out-of-range values are rejected with the dotted key path.
//!
//! | key | default |
//! |-----|---------|
//! | `task.kind` | `logistic` (`quadratic`, `logistic`, `tiny-mlp`) |
//! | `task.features` / `classes` / `hidden` / `padding` | 20 / 10 / 16 / 0 |
//! | `task.l2` | 0.0 |
//! | `task.samples_per_client` / `test_samples` | 200 / 1000 |
//! | `task.client_test_samples` | unset (shared test set only) |
//! | `task.concentration` / `separation` / `noise` | 1.0 / 1.0 / 0.5 |
//! | `topology.kind` | `erdos-renyi` (`ring`, `erdos-renyi`, `k-regular`, `full`) |
//! | `topology.nodes` / `p` / `degree` | 20 / 0.45 / 4 |
//! | `aggregator.kind` | `sketchguard` (`dfedavg`, `krum`, `balance`, `sketchguard`) |
//! | `aggregator.gamma` / `kappa` / `alpha` | 2.0 / 1.0 / 0.5 |
//! | `aggregator.sketch_size` | `min(1000, ceil(d / 4))`, resolved at parse time |
//! | `aggregator.rel_tol` / `verify` | 1e-5 / true |
//! | `aggregator.krum_f` | unset: `round(byz_fraction * models)` per neighborhood |
//! | `attack.kind` | `none` (`gaussian`, `directed-deviation`) |
//! | `attack.sigma` / `lambda` / `consistent_sketch` | 1.0 / 2.0 / true |
//! | `attack.byz_fraction` | 0.0, at most 0.8 |
//! | `run.rounds` / `local_epochs` / `lr` / `batch_size` | 10 / 3 / 0.01 / 64 |
//! | `run.threads` / `eval_stride` / `per_client_test` | 0 (all cores) / 1 / false |
//! | `seeds.data` / `topology` / `byzantine` / `training` / `attack` / `init` | 987654321 |
//! | `seeds.sketch` | 42 |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorKind, ThresholdSchedule};
use crate::attacks::{AttackKind, AttackSpec};
use crate::error::{Error, Result};
use crate::learning::task::MAX_HIDDEN_UNITS;
use crate::learning::{DataSpec, SgdSettings, Task, TaskKind};
use crate::topology::{TopologyKind, TopologySpec};

pub const MAX_BYZ_FRACTION: f64 = 0.8;
pub const DEFAULT_SEED: u64 = 987_654_321;
pub const DEFAULT_SKETCH_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub features: usize,
    pub classes: usize,
    pub hidden: usize,
    pub padding: usize,
    pub l2: f64,
    pub samples_per_client: usize,
    pub test_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_test_samples: Option<usize>,
    pub concentration: f64,
    pub separation: f64,
    pub noise: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Logistic,
            features: 20,
            classes: 10,
            hidden: 16,
            padding: 0,
            l2: 0.0,
            samples_per_client: 200,
            test_samples: 1000,
            client_test_samples: None,
            concentration: 1.0,
            separation: 1.0,
            noise: 0.5,
        }
    }
}

impl TaskConfig {
    pub fn task(&self) -> Task {
        Task {
            kind: self.kind,
            features: self.features,
            classes: if self.kind == TaskKind::Quadratic { 0 } else { self.classes },
            hidden: if self.kind == TaskKind::TinyMlp { self.hidden } else { 0 },
            padding: self.padding,
            l2: self.l2,
        }
    }

    pub fn dim(&self) -> usize {
        self.task().dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyName {
    Ring,
    ErdosRenyi,
    KRegular,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub kind: TopologyName,
    pub nodes: usize,
    pub p: f64,
    pub degree: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            kind: TopologyName::ErdosRenyi,
            nodes: 20,
            p: 0.45,
            degree: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    pub gamma: f64,
    pub kappa: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sketch_size: Option<usize>,
    pub rel_tol: f64,
    pub verify: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krum_f: Option<usize>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            kind: AggregatorKind::Sketchguard,
            gamma: 2.0,
            kappa: 1.0,
            alpha: 0.5,
            sketch_size: None,
            rel_tol: crate::sketch::DEFAULT_VERIFY_REL_TOL,
            verify: true,
            krum_f: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    None,
    Gaussian,
    DirectedDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackName,
    pub sigma: f64,
    pub lambda: f64,
    pub consistent_sketch: bool,
    pub byz_fraction: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackName::None,
            sigma: 1.0,
            lambda: 2.0,
            consistent_sketch: true,
            byz_fraction: 0.0,
        }
    }
}

impl AttackConfig {
    pub fn spec(&self) -> AttackSpec {
        let kind = match self.kind {
            AttackName::None => AttackKind::None,
            AttackName::Gaussian => AttackKind::Gaussian { sigma: self.sigma },
            AttackName::DirectedDeviation => AttackKind::DirectedDeviation { lambda: self.lambda },
        };
        AttackSpec {
            kind,
            consistent_sketch: self.consistent_sketch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub threads: usize,
    pub eval_stride: usize,
    pub per_client_test: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rounds: 10,
            local_epochs: 3,
            lr: 0.01,
            batch_size: 64,
            threads: 0,
            eval_stride: 1,
            per_client_test: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub topology: u64,
    pub byzantine: u64,
    pub training: u64,
    pub attack: u64,
    pub init: u64,
    /// Hash-family seed shared by every node.
    pub sketch: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_master(DEFAULT_SEED)
    }
}

impl Seeds {
    /// All experiment streams from one seed; the sketch seed stays at its
    /// default so replicates share a hash family.
    pub fn from_master(seed: u64) -> Self {
        Seeds {
            data: seed,
            topology: seed,
            byzantine: seed,
            training: seed,
            attack: seed,
            init: seed,
            sketch: DEFAULT_SKETCH_SEED,
        }
    }

    pub fn with_master(self, seed: u64) -> Self {
        Seeds {
            sketch: self.sketch,
            ..Seeds::from_master(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub task: TaskConfig,
    pub topology: TopologyConfig,
    pub aggregator: AggregatorConfig,
    pub attack: AttackConfig,
    pub run: RunConfig,
    pub seeds: Seeds,
}

/// Default sketch width for a model of dimension `d`.
pub fn default_sketch_size(d: usize) -> usize {
    d.div_ceil(4).clamp(1, 1000)
}

fn check(cond: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

impl SimConfig {
    pub fn dim(&self) -> usize {
        self.task.dim()
    }

    pub fn sketch_size(&self) -> usize {
        self.aggregator.sketch_size.unwrap_or_else(|| default_sketch_size(self.dim()))
    }

    /// Fills in derived defaults so the config is fully explicit.
    pub fn resolve(mut self) -> Self {
        if self.aggregator.sketch_size.is_none() {
            self.aggregator.sketch_size = Some(default_sketch_size(self.dim()));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        check(t.features >= 1, "task.features", "must be at least 1")?;
        if t.kind != TaskKind::Quadratic {
            check(t.classes >= 2, "task.classes", "classification needs at least 2 classes")?;
        }
        if t.kind == TaskKind::TinyMlp {
            check(
                (1..=MAX_HIDDEN_UNITS).contains(&t.hidden),
                "task.hidden",
                format!("must lie in 1..={MAX_HIDDEN_UNITS}"),
            )?;
        }
        check(t.l2 >= 0.0 && t.l2.is_finite(), "task.l2", "must be non-negative")?;
        check(t.samples_per_client >= 1, "task.samples_per_client", "must be at least 1")?;
        check(t.test_samples >= 1, "task.test_samples", "must be at least 1")?;
        check(t.client_test_samples != Some(0), "task.client_test_samples", "must be at least 1")?;
        check(
            t.concentration > 0.0 && t.concentration.is_finite(),
            "task.concentration",
            "must be a finite positive number",
        )?;
        check(t.separation >= 0.0 && t.separation.is_finite(), "task.separation", "must be non-negative")?;
        check(t.noise >= 0.0 && t.noise.is_finite(), "task.noise", "must be non-negative")?;

        self.topology_spec().validate(self.topology.nodes)?;

        let a = &self.aggregator;
        check(
            a.kind != AggregatorKind::Ubar,
            "aggregator.kind",
            "ubar is recognized but not implemented (its loss-based screening is not specified here)",
        )?;
        check(a.gamma > 0.0, "aggregator.gamma", format!("must be > 0, got {}", a.gamma))?;
        check(a.kappa >= 0.0 && a.kappa.is_finite(), "aggregator.kappa", format!("must be >= 0, got {}", a.kappa))?;
        check((0.0..=1.0).contains(&a.alpha), "aggregator.alpha", format!("must lie in [0, 1], got {}", a.alpha))?;
        check(a.rel_tol >= 0.0, "aggregator.rel_tol", "must be >= 0")?;
        let k = self.sketch_size();
        check(
            k >= 1 && k <= self.dim(),
            "aggregator.sketch_size",
            format!("must satisfy 1 <= k <= d = {}, got {k}", self.dim()),
        )?;

        let at = &self.attack;
        check(
            (0.0..=MAX_BYZ_FRACTION).contains(&at.byz_fraction),
            "attack.byz_fraction",
            format!("must lie in [0, {MAX_BYZ_FRACTION}], got {}", at.byz_fraction),
        )?;
        if at.kind == AttackName::Gaussian {
            check(at.sigma > 0.0 && at.sigma.is_finite(), "attack.sigma", "must be > 0")?;
        }
        if at.kind == AttackName::DirectedDeviation {
            check(at.lambda > 0.0 && at.lambda.is_finite(), "attack.lambda", "must be > 0")?;
        }

        let s = &self.seeds;
        for (key, v) in [
            ("seeds.data", s.data),
            ("seeds.topology", s.topology),
            ("seeds.byzantine", s.byzantine),
            ("seeds.training", s.training),
            ("seeds.attack", s.attack),
            ("seeds.init", s.init),
            ("seeds.sketch", s.sketch),
        ] {
            check(v <= i64::MAX as u64, key, "must fit in a signed 64-bit TOML integer")?;
        }

        let r = &self.run;
        check(r.rounds >= 1, "run.rounds", "must be at least 1")?;
        check(r.local_epochs >= 1, "run.local_epochs", "must be at least 1")?;
        check(r.lr > 0.0 && r.lr.is_finite(), "run.lr", "must be a finite positive number")?;
        check(r.batch_size >= 1, "run.batch_size", "must be at least 1")?;
        check(r.eval_stride >= 1, "run.eval_stride", "must be at least 1")?;
        if r.per_client_test {
            check(
                t.client_test_samples.is_some() && t.kind != TaskKind::Quadratic,
                "run.per_client_test",
                "needs task.client_test_samples on a classification task",
            )?;
        }
        Ok(())
    }

    pub fn topology_spec(&self) -> TopologySpec {
        let kind = match self.topology.kind {
            TopologyName::Ring => TopologyKind::Ring,
            TopologyName::ErdosRenyi => TopologyKind::ErdosRenyi { p: self.topology.p },
            TopologyName::KRegular => TopologyKind::KRegular { degree: self.topology.degree },
            TopologyName::Full => TopologyKind::Full,
        };
        TopologySpec {
            kind,
            seed: self.seeds.topology,
        }
    }

    pub fn data_spec(&self) -> DataSpec {
        let t = &self.task;
        DataSpec {
            kind: t.kind,
            clients: self.topology.nodes,
            samples_per_client: t.samples_per_client,
            test_samples: t.test_samples,
            features: t.features,
            classes: t.classes,
            concentration: t.concentration,
            separation: t.separation,
            noise: t.noise,
            client_test_samples: t.client_test_samples,
            seed: self.seeds.data,
        }
    }

    pub fn sgd(&self) -> SgdSettings {
        SgdSettings {
            lr: self.run.lr,
            epochs: self.run.local_epochs,
            batch_size: self.run.batch_size,
        }
    }

    pub fn schedule(&self) -> ThresholdSchedule {
        ThresholdSchedule {
            gamma: self.aggregator.gamma,
            kappa: self.aggregator.kappa,
            total_rounds: self.run.rounds,
        }
    }
}

fn toml_error(err: toml::de::Error) -> Error {
    Error::config("<document>", err.message().to_string())
}

/// Parses, resolves and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let value: toml::Table = toml::from_str(text).map_err(toml_error)?;
    let config: SimConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".to_string() } else { path }, e.into_inner().message().to_string())
    })?;
    let config = config.resolve();
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Fully explicit TOML for `config`.
pub fn emit_config(config: &SimConfig) -> String {
    toml::to_string(config).expect("config serializes to TOML")
}
