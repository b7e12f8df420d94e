//! Seeded Count Sketch shared by all nodes.
//!
//! A coordinate `i` of a `d`-dimensional model is routed to bucket
//! `h(i) ∈ [0, k)` with sign `s(i) ∈ {-1, +1}`, and the sketch holds the
//! signed bucket sums. Both functions come from the SplitMix64 finalizer
//! applied to `seed ^ i`, so any two parties holding the same
//! [`SketchParams`] agree on every assignment without negotiation.
//!
//! Sums are always accumulated in ascending coordinate order; a sketch is a
//! pure function of its inputs and is bit-identical across runs and thread
//! counts.

pub mod calibration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{mix64, mix_words};
use crate::vector::{distance, norm};
use crate::ParamVector;

/// Default tolerance for sketch-vs-model verification.
pub const DEFAULT_VERIFY_REL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchParams {
    d: usize,
    k: usize,
    seed: u64,
}

impl SketchParams {
    pub fn new(d: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || d == 0 || k > d {
            return Err(Error::config(
                "aggregator.sketch_size",
                format!("sketch width must satisfy 1 <= k <= d, got k={k}, d={d}"),
            ));
        }
        Ok(SketchParams { d, k, seed })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 64-bit digest identifying the hash family.
    pub fn fingerprint(&self) -> u64 {
        mix_words(&[0x5EED_5CE7_C400_0001, self.seed, self.d as u64, self.k as u64])
    }
}

/// Bucket and sign of coordinate `i`.
///
/// Coordinates beyond `d` still hash deterministically; callers are expected
/// to stay in range.
#[inline]
pub fn derive_hash(params: &SketchParams, i: usize) -> (usize, f64) {
    let first = mix64(params.seed ^ i as u64);
    let bucket = (first % params.k as u64) as usize;
    let sign = if mix64(first) >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    values: Vec<f64>,
    fingerprint: u64,
}

impl Sketch {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

fn check_dim(params: &SketchParams, w: &ParamVector) -> Result<()> {
    if w.dim() != params.d {
        return Err(Error::config(
            "task",
            format!("model dimension {} does not match sketch dimension {}", w.dim(), params.d),
        ));
    }
    Ok(())
}

/// Count Sketch of `w`, hashing on the fly.
pub fn compute_sketch(params: &SketchParams, w: &ParamVector) -> Result<Sketch> {
    check_dim(params, w)?;
    let mut values = vec![0.0; params.k];
    for (i, &wi) in w.as_slice().iter().enumerate() {
        let (b, s) = derive_hash(params, i);
        values[b] += s * wi;
    }
    Ok(Sketch {
        values,
        fingerprint: params.fingerprint(),
    })
}

/// Euclidean distance between two sketches of the same hash family.
pub fn sketch_distance(a: &Sketch, b: &Sketch) -> Result<f64> {
    if a.fingerprint != b.fingerprint || a.values.len() != b.values.len() {
        return Err(Error::Protocol(format!(
            "sketch fingerprint mismatch ({:016x} vs {:016x}): hash families are out of sync",
            a.fingerprint, b.fingerprint
        )));
    }
    Ok(distance(&a.values, &b.values))
}

/// Recomputes the sketch of `w` and accepts it when it lies within
/// `rel_tol * max(1, ‖claimed‖)` of the claimed sketch.
pub fn verify_model_against_sketch(
    params: &SketchParams,
    w: &ParamVector,
    claimed: &Sketch,
    rel_tol: f64,
) -> Result<bool> {
    Sketcher::new(*params).verify(w, claimed, rel_tol)
}

/// A [`SketchParams`] with its bucket/sign table precomputed.
///
/// Produces exactly the same sketches as [`compute_sketch`]; it only avoids
/// rehashing when many models share one hash family.
#[derive(Debug, Clone)]
pub struct Sketcher {
    params: SketchParams,
    buckets: Vec<u32>,
    signs: Vec<f64>,
}

impl Sketcher {
    pub fn new(params: SketchParams) -> Self {
        let (buckets, signs) = (0..params.d)
            .map(|i| {
                let (b, s) = derive_hash(&params, i);
                (b as u32, s)
            })
            .unzip();
        Sketcher {
            params,
            buckets,
            signs,
        }
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn sketch(&self, w: &ParamVector) -> Result<Sketch> {
        check_dim(&self.params, w)?;
        let mut values = vec![0.0; self.params.k];
        for ((&b, &s), &wi) in self.buckets.iter().zip(&self.signs).zip(w.as_slice()) {
            values[b as usize] += s * wi;
        }
        Ok(Sketch {
            values,
            fingerprint: self.params.fingerprint(),
        })
    }

    pub fn verify(&self, w: &ParamVector, claimed: &Sketch, rel_tol: f64) -> Result<bool> {
        if !(rel_tol >= 0.0) {
            return Err(Error::config("aggregator.rel_tol", "must be >= 0"));
        }
        if claimed.fingerprint != self.params.fingerprint() {
            return Err(Error::Protocol(
                "claimed sketch was built with a different hash family".into(),
            ));
        }
        let recomputed = self.sketch(w)?;
        let gap = sketch_distance(&recomputed, claimed)?;
        Ok(gap <= rel_tol * claimed.norm().max(1.0))
    }
}
