//! Byzantine-robust decentralized federated learning with sketch-based
//! neighbor screening.
//!
//! The crate is a deterministic, round-based simulator. Every node trains
//! locally, publishes a Count Sketch of its model, screens neighbors by
//! sketch distance against an adaptive threshold, fetches and verifies the
//! full models of accepted neighbors, and mixes them into its own model.
//! Full-precision baselines (D-FedAvg, Krum, BALANCE) run through the same
//! engine so robustness, communication and screening cost can be compared
//! on identical seeds.
//!
//! Module map:
//!
//! - [`sketch`]: seeded Count Sketch, sketch distances, model verification,
//!   and the k to epsilon calibration.
//! - [`learning`]: desk-scale tasks, synthetic non-IID data, local SGD, TER.
//! - [`topology`]: graph generators and honest-subgraph connectivity.
//! - [`attacks`]: Byzantine message crafting.
//! - [`aggregation`]: screening filters and aggregation rules.
//! - [`engine`]: the round loop, metrics, accounting, sweeps and benches.
//! - [`config`] and [`checks`]: configuration files and property suites
//!   used by the command-line front end.

pub mod aggregation;
pub mod attacks;
pub mod checks;
pub mod config;
pub mod engine;
pub mod error;
pub mod hash;
pub mod learning;
pub mod sketch;
pub mod topology;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ParamVector;

/// Index of a node in the communication graph.
pub type NodeId = usize;
