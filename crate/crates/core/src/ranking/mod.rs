//! Bradley–Terry leaderboards.
//!
//! Outcomes are fitted by maximum likelihood with
//! `P(i beats j) = e^θi / (e^θi + e^θj)`; a tie credits half a win to each
//! side. Strengths are centred to mean zero and reported as
//! `score = 400·θ + 1000`, with percentile-bootstrap intervals.

mod bootstrap;
mod bt;
mod leaderboard;
mod matrix;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dimension, ModelId, Outcome, PreferenceRecord};

pub use bootstrap::{
    bootstrap_ci, bootstrap_replicate, collect_summary, percentile, summarize_replicates, BootstrapSummary,
    Interval,
};
pub use bt::{fit_bradley_terry, fit_tally, log_likelihood, FitReport, Solver};
pub use leaderboard::{
    assign_ranks, build_leaderboard, build_leaderboard_from_parts, rank_deltas, score_transform,
    Leaderboard, SCORE_OFFSET, SCORE_SCALE,
};
pub use matrix::{pair_matrices, PairMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankingError {
    #[error("no outcomes to fit")]
    NoData,
    #[error("comparison graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("maximum likelihood estimate is unbounded: a group of models never lost to the rest")]
    Unbounded,
    #[error("fit did not converge after {iterations} iterations (gradient {gradient:e})")]
    NotConverged { iterations: usize, gradient: f64 },
    #[error("{skipped} of {total} bootstrap resamples failed to fit")]
    TooManySkips { skipped: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Convergence threshold on the max-norm of the log-likelihood gradient.
    pub tolerance: f64,
    /// Total iteration cap across both solvers.
    pub max_iterations: usize,
    /// MM iterations before switching to damped Newton.
    pub mm_iterations: usize,
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Largest tolerated fraction of failed bootstrap resamples.
    pub max_skip_fraction: f64,
    /// Keep the per-iteration log-likelihood in the fit report.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            mm_iterations: 2_000,
            resamples: 1_000,
            confidence: 0.90,
            seed: 0,
            max_skip_fraction: 0.05,
            record_trace: false,
        }
    }
}

/// Outcomes of one dimension, ready for fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleOutcomeSet {
    pub dimension: Dimension,
    pub outcomes: Vec<(ModelId, ModelId, Outcome)>,
    /// Models with at least one outcome, sorted.
    pub model_index: Vec<ModelId>,
    /// Registered models without a single outcome in this dimension.
    pub excluded: Vec<ModelId>,
}

impl BattleOutcomeSet {
    pub fn new(dimension: Dimension, outcomes: Vec<(ModelId, ModelId, Outcome)>) -> Self {
        let outcomes: Vec<_> = outcomes.into_iter().filter(|(a, b, _)| a != b).collect();
        let mut model_index: Vec<ModelId> = outcomes
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        model_index.sort();
        model_index.dedup();
        Self {
            dimension,
            outcomes,
            model_index,
            excluded: Vec::new(),
        }
    }

    /// Builds the set from preference records; `registry` lists every model
    /// that should be accounted for, so silent ones land in `excluded`.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a PreferenceRecord>,
        dimension: Dimension,
        registry: &[ModelId],
    ) -> Self {
        let outcomes = records
            .into_iter()
            .map(|r| (r.model_a.clone(), r.model_b.clone(), r.outcome(dimension)))
            .collect();
        let mut set = Self::new(dimension, outcomes);
        let mut excluded: Vec<ModelId> = registry
            .iter()
            .filter(|m| set.model_index.binary_search(m).is_err())
            .cloned()
            .collect();
        excluded.sort();
        excluded.dedup();
        set.excluded = excluded;
        set
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `(i, j, credit_of_i)` triples over `model_index` positions.
    pub fn indexed(&self) -> Vec<(usize, usize, f64)> {
        let pos: BTreeMap<&ModelId, usize> = self
            .model_index
            .iter()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        self.outcomes
            .iter()
            .map(|(a, b, o)| (pos[a], pos[b], o.score_a()))
            .collect()
    }

    pub fn battle_counts(&self) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; self.model_index.len()];
        for (i, j, _) in self.indexed() {
            counts[i] += 1;
            counts[j] += 1;
        }
        counts
    }

    pub fn tie_count(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|(_, _, o)| *o == Outcome::Tie)
            .count()
    }
}

/// Aggregated pairwise credits: `wins[i*k + j]` is the (half-tie) credit of
/// `i` against `j`, `counts[i*k + j]` the number of comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub k: usize,
    pub wins: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Tally {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            wins: alloc::vec![0.0; k * k],
            counts: alloc::vec![0.0; k * k],
        }
    }

    pub fn from_indexed(k: usize, outcomes: &[(usize, usize, f64)]) -> Self {
        let mut t = Self::new(k);
        for &(i, j, s) in outcomes {
            t.add(i, j, s);
        }
        t
    }

    pub fn add(&mut self, i: usize, j: usize, credit_i: f64) {
        let k = self.k;
        self.wins[i * k + j] += credit_i;
        self.wins[j * k + i] += 1.0 - credit_i;
        self.counts[i * k + j] += 1.0;
        self.counts[j * k + i] += 1.0;
    }

    pub fn total_wins(&self, i: usize) -> f64 {
        self.wins[i * self.k..(i + 1) * self.k].iter().sum()
    }
}
