use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    bootstrap_ci, fit_bradley_terry, BattleOutcomeSet, BootstrapSummary, FitConfig, FitReport,
    RankingError, Solver,
};
use crate::domain::{Dimension, ModelId, StrengthEstimate};

pub const SCORE_SCALE: f64 = 400.0;
pub const SCORE_OFFSET: f64 = 1000.0;

/// `400·θ + 1000`, elementwise.
pub fn score_transform(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| SCORE_SCALE * t + SCORE_OFFSET).collect()
}

/// Ranks for scores sorted in descending order.
///
/// Scores that round to the same integer share a rank, and the shared rank is
/// the position of the last member of the group; the next distinct score
/// takes its own position. `[1188, 1050.2, 1049.9, 1038]` ranks `[1, 3, 3, 4]`.
pub fn assign_ranks(sorted_scores: &[f64]) -> Vec<u32> {
    let rounded: Vec<i64> = sorted_scores.iter().map(|s| libm::round(*s) as i64).collect();
    let mut ranks = alloc::vec![0u32; rounded.len()];
    let mut start = 0;
    while start < rounded.len() {
        let mut end = start;
        while end + 1 < rounded.len() && rounded[end + 1] == rounded[start] {
            end += 1;
        }
        for r in &mut ranks[start..=end] {
            *r = (end + 1) as u32;
        }
        start = end + 1;
    }
    ranks
}

/// `rank_global − rank_dimension` per model of `dimension_ranks`; `None` when
/// the model is absent from the global board.
pub fn rank_deltas(
    global_ranks: &[(ModelId, u32)],
    dimension_ranks: &[(ModelId, u32)],
) -> Vec<(ModelId, Option<i64>)> {
    let global: BTreeMap<&ModelId, u32> = global_ranks.iter().map(|(m, r)| (m, *r)).collect();
    dimension_ranks
        .iter()
        .map(|(m, r)| {
            let delta = global.get(m).map(|g| i64::from(*g) - i64::from(*r));
            (m.clone(), delta)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub dimension: Dimension,
    /// Sorted by descending score; ties broken by model id.
    pub estimates: Vec<StrengthEstimate>,
    pub ranks: Vec<(ModelId, u32)>,
    /// Absent for the global board itself.
    pub rank_deltas_vs_global: Option<Vec<(ModelId, Option<i64>)>>,
    pub excluded: Vec<ModelId>,
    pub battles: usize,
    pub ties: usize,
    pub iterations: usize,
    pub solver: Solver,
    pub bootstrap_used: usize,
    pub bootstrap_skipped: usize,
}

impl Leaderboard {
    pub fn estimate(&self, model: &ModelId) -> Option<&StrengthEstimate> {
        self.estimates.iter().find(|e| &e.model_id == model)
    }

    pub fn rank(&self, model: &ModelId) -> Option<u32> {
        self.ranks.iter().find(|(m, _)| m == model).map(|(_, r)| *r)
    }

    pub fn rank_delta(&self, model: &ModelId) -> Option<i64> {
        self.rank_deltas_vs_global
            .as_ref()?
            .iter()
            .find(|(m, _)| m == model)
            .and_then(|(_, d)| *d)
    }

    pub fn scores(&self) -> Vec<(ModelId, f64)> {
        self.estimates
            .iter()
            .map(|e| (e.model_id.clone(), e.score))
            .collect()
    }

    pub fn mean_score(&self) -> f64 {
        self.estimates.iter().map(|e| e.score).sum::<f64>() / self.estimates.len() as f64
    }
}

/// Fit, transform, bootstrap and rank in one go.
pub fn build_leaderboard(
    data: &BattleOutcomeSet,
    cfg: &FitConfig,
    global: Option<&Leaderboard>,
) -> Result<Leaderboard, RankingError> {
    let fit = fit_bradley_terry(data, cfg)?;
    let point = score_transform(&fit.theta);
    let boot = bootstrap_ci(data, &point, cfg)?;
    Ok(build_leaderboard_from_parts(data, &fit, &boot, global))
}

/// Assembles a leaderboard from an existing fit and bootstrap summary.
pub fn build_leaderboard_from_parts(
    data: &BattleOutcomeSet,
    fit: &FitReport,
    boot: &BootstrapSummary,
    global: Option<&Leaderboard>,
) -> Leaderboard {
    let scores = score_transform(&fit.theta);
    let counts = data.battle_counts();
    let mut estimates: Vec<StrengthEstimate> = data
        .model_index
        .iter()
        .enumerate()
        .map(|(i, m)| StrengthEstimate {
            model_id: m.clone(),
            theta: fit.theta[i],
            score: scores[i],
            ci_low_delta: boot.intervals[i].low_delta,
            ci_high_delta: boot.intervals[i].high_delta,
            n_battles: counts[i],
        })
        .collect();
    estimates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.model_id.cmp(&b.model_id)));
    let sorted_scores: Vec<f64> = estimates.iter().map(|e| e.score).collect();
    let ranks: Vec<(ModelId, u32)> = estimates
        .iter()
        .map(|e| e.model_id.clone())
        .zip(assign_ranks(&sorted_scores))
        .collect();
    let rank_deltas_vs_global = match (data.dimension, global) {
        (Dimension::Global, _) | (_, None) => None,
        (_, Some(g)) => Some(rank_deltas(&g.ranks, &ranks)),
    };
    Leaderboard {
        dimension: data.dimension,
        estimates,
        ranks,
        rank_deltas_vs_global,
        excluded: data.excluded.clone(),
        battles: data.len(),
        ties: fit.ties,
        iterations: fit.iterations,
        solver: fit.solver,
        bootstrap_used: boot.used,
        bootstrap_skipped: boot.skipped,
    }
}
