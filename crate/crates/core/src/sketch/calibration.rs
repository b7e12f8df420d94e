//! Monte Carlo calibration of the sketch distortion `ε̂(k) = c / √k`.
//!
//! For each width `k` in a ladder, random Gaussian pairs are sketched with a
//! fresh hash seed per pair and the squared-distance distortion
//! `|‖CS(u) − CS(v)‖² / ‖u − v‖² − 1|` is recorded. The constant `c` is the
//! largest per-width `(1 − δ/2)` quantile scaled by `√k`, so every row of the
//! table has an empirical violation rate at most `δ / 2`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{compute_sketch, sketch_distance, SketchParams};
use crate::error::{Error, Result};
use crate::hash::{mix_words, stream_rng, Stream};
use crate::vector::squared_distance;
use crate::ParamVector;

/// Fitted `c` from the default calibration run (`sketchguard calibrate`).
/// A unit test re-runs the calibration and checks it reproduces this value.
pub const DEFAULT_EPSILON_CONSTANT: f64 = 4.161181249740502;

pub const CSV_HEADER: &str = "k,epsilon_hat,violation_rate";

/// `ε̂` for a sketch of width `k` under the frozen default constant.
pub fn epsilon_hat(k: usize) -> f64 {
    epsilon_hat_with(DEFAULT_EPSILON_CONSTANT, k)
}

pub fn epsilon_hat_with(constant: f64, k: usize) -> f64 {
    constant / (k as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub dim: usize,
    pub widths: Vec<usize>,
    pub pairs: usize,
    /// Target violation probability.
    pub delta: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            dim: 10_000,
            widths: vec![64, 128, 256, 512, 1024, 2000, 4096],
            pairs: 1000,
            delta: 0.01,
            seed: 0xCA1B_0000_0000_0001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub k: usize,
    pub epsilon_hat: f64,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub constant: f64,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    pub fn epsilon_hat(&self, k: usize) -> f64 {
        epsilon_hat_with(self.constant, k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.k, row.epsilon_hat, row.violation_rate));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }
}

/// Digest of the table implied by the frozen constant over the default
/// ladder; recorded in run manifests.
pub fn default_table_digest() -> String {
    let widths = CalibrationSettings::default().widths;
    let table = CalibrationTable {
        constant: DEFAULT_EPSILON_CONSTANT,
        rows: widths
            .into_iter()
            .map(|k| CalibrationRow {
                k,
                epsilon_hat: epsilon_hat(k),
                violation_rate: f64::NAN,
            })
            .collect(),
    };
    table.digest()
}

fn gaussian(d: usize, rng: &mut impl Rng) -> ParamVector {
    ParamVector::new((0..d).map(|_| rng.sample(StandardNormal)).collect())
}

/// Squared-distance distortions `|ratio − 1|` for `pairs` random pairs at
/// width `k`, each pair with its own hash seed.
pub fn distortions(dim: usize, k: usize, pairs: usize, seed: u64) -> Result<Vec<f64>> {
    (0..pairs)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(seed, Stream::Data, k as u64, p as u64);
            let u = gaussian(dim, &mut rng);
            let v = gaussian(dim, &mut rng);
            let params = SketchParams::new(dim, k, mix_words(&[seed, k as u64, p as u64]))?;
            let est = sketch_distance(&compute_sketch(&params, &u)?, &compute_sketch(&params, &v)?)?;
            let truth = squared_distance(u.as_slice(), v.as_slice());
            Ok((est * est / truth - 1.0).abs())
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn calibrate(settings: &CalibrationSettings) -> Result<CalibrationTable> {
    if settings.widths.is_empty() || settings.pairs == 0 {
        return Err(Error::config("calibrate", "need at least one width and one pair"));
    }
    if !(settings.delta > 0.0 && settings.delta < 1.0) {
        return Err(Error::config("calibrate.delta", "must lie in (0, 1)"));
    }
    let mut per_width = Vec::with_capacity(settings.widths.len());
    let mut constant: f64 = 0.0;
    for &k in &settings.widths {
        let mut dev = distortions(settings.dim, k, settings.pairs, settings.seed)?;
        dev.sort_by(f64::total_cmp);
        constant = constant.max(quantile(&dev, 1.0 - settings.delta / 2.0) * (k as f64).sqrt());
        per_width.push((k, dev));
    }
    let rows = per_width
        .into_iter()
        .map(|(k, dev)| {
            let eps = epsilon_hat_with(constant, k);
            // The width that sets `c` sits exactly on the boundary; allow for
            // the rounding in `c / √k`.
            let violations = dev.iter().filter(|&&x| x > eps * (1.0 + 1e-12)).count();
            CalibrationRow {
                k,
                epsilon_hat: eps,
                violation_rate: violations as f64 / dev.len() as f64,
            }
        })
        .collect();
    Ok(CalibrationTable { constant, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_calibration_reproduces_frozen_constant() {
        let table = calibrate(&CalibrationSettings::default()).unwrap();
        assert!(
            (table.constant - DEFAULT_EPSILON_CONSTANT).abs() < 1e-12,
            "refit constant {} differs from frozen {}",
            table.constant,
            DEFAULT_EPSILON_CONSTANT
        );
        for row in &table.rows {
            assert!(row.violation_rate <= 0.005 + 1e-12, "{row:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let table = CalibrationTable {
            constant: 4.0,
            rows: vec![CalibrationRow { k: 16, epsilon_hat: 1.0, violation_rate: 0.0 }],
        };
        assert_eq!(table.to_csv(), "k,epsilon_hat,violation_rate\n16,1,0\n");
    }
}
