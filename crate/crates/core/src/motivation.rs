//! Motivation functionals: scores of (active posterior, action sequence).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionSeq, FreeLayout};
use crate::prob::{JointTable, ProbTable};

/// The posterior for one action sequence, with the layout needed to find
/// its sensor, latent-state and θ axes.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorView<'a> {
    pub layout: &'a FreeLayout,
    pub table: &'a JointTable,
}

impl<'a> PosteriorView<'a> {
    pub fn new(layout: &'a FreeLayout, table: &'a JointTable) -> Result<Self> {
        if table.dims() != layout.dims().as_slice() {
            return Err(Error::ShapeMismatch {
                left: layout.dims(),
                right: table.dims().to_vec(),
            });
        }
        Ok(PosteriorView { layout, table })
    }

    /// Joint marginal over `ŝ_{t:T̂}`.
    pub fn sensor_marginal(&self) -> Result<JointTable> {
        self.table.marginal(&self.layout.sensor_axes())
    }
}

pub trait MotivationFunctional: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, posterior: PosteriorView<'_>, action_seq: &ActionSeq) -> Result<f64>;
}

/// Reward attached to every sensor symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardStructure {
    values: Vec<f64>,
}

impl RewardStructure {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(RewardStructure { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Undiscounted expected sum of future rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedReward {
    pub rewards: RewardStructure,
}

/// `Σ_{ŝ_{t:T̂}} q(ŝ_{t:T̂}) Σ_τ reward(ŝ_τ)`.
pub fn expected_reward(posterior: PosteriorView<'_>, rewards: &RewardStructure) -> Result<f64> {
    let n_sensor = posterior.layout.n_sensor;
    if rewards.values.len() != n_sensor {
        return Err(Error::ShapeMismatch {
            left: vec![n_sensor],
            right: vec![rewards.values.len()],
        });
    }
    let marginal = posterior.sensor_marginal()?;
    let len = posterior.layout.horizon_len();
    let mut total = 0.0;
    for (flat, &p) in marginal.values().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut rest = flat;
        let mut sum = 0.0;
        for _ in 0..len {
            sum += rewards.values[rest % n_sensor];
            rest /= n_sensor;
        }
        total += p * sum;
    }
    Ok(total)
}

impl MotivationFunctional for ExpectedReward {
    fn name(&self) -> &str {
        "expected-reward"
    }

    fn evaluate(&self, posterior: PosteriorView<'_>, _action_seq: &ActionSeq) -> Result<f64> {
        expected_reward(posterior, &self.rewards)
    }
}

/// Negative entropy of the future-sensor marginal: prefers predictable
/// sensor futures.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NegativeExpectedEntropy;

pub fn negative_expected_entropy(posterior: PosteriorView<'_>) -> Result<f64> {
    let marginal = posterior.sensor_marginal()?;
    Ok(marginal
        .values()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum())
}

impl MotivationFunctional for NegativeExpectedEntropy {
    fn name(&self) -> &str {
        "negative-expected-entropy"
    }

    fn evaluate(&self, posterior: PosteriorView<'_>, _action_seq: &ActionSeq) -> Result<f64> {
        negative_expected_entropy(posterior)
    }
}
