use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_tally, score_transform, BattleOutcomeSet, FitConfig, RankingError, Tally};
use crate::rng::stream_rng;

/// Interval bounds relative to the point score: `low_delta ≤ 0 ≤ high_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low_delta: f64,
    pub high_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Aligned with the outcome set's `model_index`.
    pub intervals: Vec<Interval>,
    pub used: usize,
    pub skipped: usize,
}

/// Scores refitted on resample number `replicate`.
///
/// Battles are drawn with replacement from `indexed`; the draws depend only
/// on `(cfg.seed, replicate)`, so replicates can be computed in any order.
pub fn bootstrap_replicate(
    k: usize,
    indexed: &[(usize, usize, f64)],
    cfg: &FitConfig,
    replicate: u64,
) -> Result<Vec<f64>, RankingError> {
    let n = indexed.len();
    if n == 0 {
        return Err(RankingError::NoData);
    }
    let mut rng = stream_rng(cfg.seed, replicate);
    let mut tally = Tally::new(k);
    for _ in 0..n {
        let (i, j, s) = indexed[rng.gen_range(0..n)];
        tally.add(i, j, s);
    }
    // a resample can drop a model entirely; such replicates are skipped
    if (0..k).any(|i| (0..k).all(|j| tally.counts[i * k + j] == 0.0)) {
        return Err(RankingError::DisconnectedGraph { components: 2 });
    }
    let fit = fit_tally(&tally, cfg)?;
    Ok(score_transform(&fit.theta))
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Percentile intervals around `point` from replicate score vectors.
pub fn summarize_replicates(point: &[f64], replicates: &[Vec<f64>], confidence: f64) -> Vec<Interval> {
    let alpha = (1.0 - confidence) / 2.0;
    (0..point.len())
        .map(|m| {
            let mut col: Vec<f64> = replicates.iter().map(|r| r[m]).collect();
            col.sort_by(f64::total_cmp);
            Interval {
                low_delta: (percentile(&col, alpha) - point[m]).min(0.0),
                high_delta: (percentile(&col, 1.0 - alpha) - point[m]).max(0.0),
            }
        })
        .collect()
}

/// Percentile bootstrap over battles.
///
/// Failed resamples are skipped and counted; more than
/// `cfg.max_skip_fraction` of them is an error.
pub fn bootstrap_ci(
    data: &BattleOutcomeSet,
    point_scores: &[f64],
    cfg: &FitConfig,
) -> Result<BootstrapSummary, RankingError> {
    let k = data.model_index.len();
    let indexed = data.indexed();
    let results: Vec<_> = (0..cfg.resamples as u64)
        .map(|r| bootstrap_replicate(k, &indexed, cfg, r))
        .collect();
    collect_summary(point_scores, results, cfg)
}

pub fn collect_summary(
    point_scores: &[f64],
    results: Vec<Result<Vec<f64>, RankingError>>,
    cfg: &FitConfig,
) -> Result<BootstrapSummary, RankingError> {
    let total = results.len();
    let replicates: Vec<Vec<f64>> = results.into_iter().filter_map(Result::ok).collect();
    let skipped = total - replicates.len();
    if total > 0 && skipped as f64 > cfg.max_skip_fraction * total as f64 {
        return Err(RankingError::TooManySkips { skipped, total });
    }
    let intervals = if replicates.is_empty() {
        point_scores
            .iter()
            .map(|_| Interval {
                low_delta: 0.0,
                high_delta: 0.0,
            })
            .collect()
    } else {
        summarize_replicates(point_scores, &replicates, cfg.confidence)
    };
    Ok(BootstrapSummary {
        intervals,
        used: replicates.len(),
        skipped,
    })
}
