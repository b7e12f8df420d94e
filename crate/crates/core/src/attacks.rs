//! Byzantine message crafting.
//!
//! Attackers are omniscient within a round: they see the mean of the honest
//! post-training models and the mean honest update direction. Gaussian
//! attackers act independently; directed-deviation attackers all send the
//! same vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{Sketch, Sketcher};
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    /// `ŵ = w + σ·N(0, I)`
    Gaussian { sigma: f64 },
    /// `ŵ = w̄_honest − λ·sign(Δ̄)`, an approximation of optimization-based
    /// deviation attacks that pushes against the honest descent direction.
    DirectedDeviation { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Whether the sketch an attacker publishes matches the model it serves.
    pub consistent_sketch: bool,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            consistent_sketch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AttackKind::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::config("attack.sigma", "must be positive"))
            }
            AttackKind::DirectedDeviation { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::config("attack.lambda", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// What attackers may observe in round `t`, computed once at the barrier.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub round: usize,
    /// Mean of honest `w^{t+1/2}`.
    pub honest_mean: ParamVector,
    /// Mean of honest `w^{t+1/2}` minus mean of honest `w^t`.
    pub honest_direction: ParamVector,
}

impl AttackContext {
    pub fn from_honest(round: usize, before: &[&ParamVector], after: &[&ParamVector]) -> Option<Self> {
        let mean_after = crate::vector::mean_of(after.iter().copied())?;
        let mean_before = crate::vector::mean_of(before.iter().copied())?;
        Some(AttackContext {
            round,
            honest_direction: mean_after.sub(&mean_before),
            honest_mean: mean_after,
        })
    }
}

pub fn apply_attack(
    spec: &AttackSpec,
    honest_update: &ParamVector,
    ctx: &AttackContext,
    rng: &mut impl Rng,
) -> ParamVector {
    match spec.kind {
        AttackKind::None => honest_update.clone(),
        AttackKind::Gaussian { sigma } => ParamVector::new(
            honest_update
                .as_slice()
                .iter()
                .map(|&w| w + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        ),
        AttackKind::DirectedDeviation { lambda } => ParamVector::new(
            ctx.honest_mean
                .as_slice()
                .iter()
                .zip(ctx.honest_direction.as_slice())
                .map(|(&m, &delta)| m - lambda * sign(delta))
                .collect(),
        ),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sketch and model an attacker puts on the wire. An inconsistent attacker
/// advertises the sketch of its honest-looking model while serving the
/// crafted one.
pub fn attacker_message(
    spec: &AttackSpec,
    honest_model: &ParamVector,
    crafted: ParamVector,
    sketcher: &Sketcher,
) -> Result<(Sketch, ParamVector)> {
    let sketch = if spec.consistent_sketch {
        sketcher.sketch(&crafted)?
    } else {
        sketcher.sketch(honest_model)?
    };
    Ok((sketch, crafted))
}
