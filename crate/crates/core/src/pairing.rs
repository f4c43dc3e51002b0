//! Pair selection and slot randomisation for new battles.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ModelId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("need at least two active models, have {0}")]
    NotEnoughModels(usize),
}

/// Unordered model pair, stored with `first < second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelPair {
    pub first: ModelId,
    pub second: ModelId,
}

impl ModelPair {
    pub fn new(a: ModelId, b: ModelId) -> Self {
        if a <= b {
            Self { first: a, second: b }
        } else {
            Self { first: b, second: a }
        }
    }
}

/// Battles started per unordered pair.
pub type PairCounts = BTreeMap<ModelPair, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    /// Probability of taking the least-played pair instead of a uniform one.
    pub balance_probability: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            balance_probability: 0.5,
        }
    }
}

impl PairingConfig {
    pub fn uniform() -> Self {
        Self {
            balance_probability: 0.0,
        }
    }
}

/// Picks the next pair among active models.
///
/// With probability `balance_probability` the least-played pair wins (ties
/// broken uniformly), otherwise a uniformly random pair. The participant's
/// previous pair is never repeated unless it is the only one.
pub fn sample_pair<R: Rng + ?Sized>(
    rng: &mut R,
    active: &[ModelId],
    previous: Option<&ModelPair>,
    counts: &PairCounts,
    cfg: &PairingConfig,
) -> Result<ModelPair, PairingError> {
    let mut models: Vec<&ModelId> = active.iter().collect();
    models.sort();
    models.dedup();
    if models.len() < 2 {
        return Err(PairingError::NotEnoughModels(models.len()));
    }
    let mut candidates = Vec::with_capacity(models.len() * (models.len() - 1) / 2);
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            candidates.push(ModelPair::new((*a).clone(), (*b).clone()));
        }
    }
    if candidates.len() > 1 {
        if let Some(prev) = previous {
            candidates.retain(|p| p != prev);
        }
    }
    let balance = rng.gen_bool(cfg.balance_probability.clamp(0.0, 1.0));
    if balance {
        let count = |p: &ModelPair| counts.get(p).copied().unwrap_or(0);
        let min = candidates.iter().map(count).min().unwrap_or(0);
        candidates.retain(|p| count(p) == min);
    }
    Ok(candidates
        .choose(rng)
        .cloned()
        .expect("candidate list is non-empty"))
}

/// Random slot order: `(slot_a, slot_b)`.
pub fn assign_slots<R: Rng + ?Sized>(rng: &mut R, pair: &ModelPair) -> (ModelId, ModelId) {
    if rng.gen_bool(0.5) {
        (pair.first.clone(), pair.second.clone())
    } else {
        (pair.second.clone(), pair.first.clone())
    }
}
