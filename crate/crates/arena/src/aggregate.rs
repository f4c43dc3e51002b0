//! Leaderboards, matrices, correlations, demographics and flags, computed
//! from an immutable snapshot of records and the ban set.

use std::collections::{BTreeMap, BTreeSet};

use arena_core::analytics::{
    correlation_table, demographics_breakdown, BenchmarkSuite, CorrelationResult, Demographics,
};
use arena_core::domain::{BenchmarkScore, Dimension, ModelId, Participant, ParticipantId, PreferenceRecord};
use arena_core::moderation::{flag_participant, Flag, ModerationConfig, ParticipantActivity};
use arena_core::ranking::{
    bootstrap_replicate, build_leaderboard_from_parts, collect_summary, fit_bradley_terry,
    pair_matrices, score_transform, BattleOutcomeSet, BootstrapSummary, FitConfig, Leaderboard,
    PairMatrix, RankingError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Percentile bootstrap with replicates spread over the rayon pool. Gives
/// the same result as the sequential version for a given seed.
pub fn par_bootstrap_ci(
    data: &BattleOutcomeSet,
    point_scores: &[f64],
    cfg: &FitConfig,
) -> Result<BootstrapSummary, RankingError> {
    let k = data.model_index.len();
    let indexed = data.indexed();
    let results: Vec<_> = (0..cfg.resamples as u64)
        .into_par_iter()
        .map(|r| bootstrap_replicate(k, &indexed, cfg, r))
        .collect();
    collect_summary(point_scores, results, cfg)
}

pub fn par_build_leaderboard(
    data: &BattleOutcomeSet,
    cfg: &FitConfig,
    global: Option<&Leaderboard>,
) -> Result<Leaderboard, RankingError> {
    let fit = fit_bradley_terry(data, cfg)?;
    let point = score_transform(&fit.theta);
    let boot = par_bootstrap_ci(data, &point, cfg)?;
    Ok(build_leaderboard_from_parts(data, &fit, &boot, global))
}

/// Everything the aggregate computation reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateInput {
    pub seq: u64,
    pub registry: Vec<ModelId>,
    pub records: Vec<PreferenceRecord>,
    pub banned: BTreeSet<ParticipantId>,
    pub participants: Vec<Participant>,
    pub activity: BTreeMap<ParticipantId, ParticipantActivity>,
    pub benchmarks: Vec<BenchmarkScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    pub fit: FitConfig,
    pub suite: BenchmarkSuite,
    pub moderation: ModerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoardResult {
    Ok(Leaderboard),
    Err { error: String },
}

impl BoardResult {
    pub fn board(&self) -> Option<&Leaderboard> {
        match self {
            BoardResult::Ok(b) => Some(b),
            BoardResult::Err { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Last event included.
    pub seq: u64,
    pub leaderboards: BTreeMap<Dimension, BoardResult>,
    pub matrices: BTreeMap<Dimension, PairMatrix>,
    pub demographics: Demographics,
    pub correlations: Vec<CorrelationResult>,
    pub flags: Vec<Flag>,
}

impl Aggregates {
    pub fn leaderboard(&self, dimension: Dimension) -> Option<&Leaderboard> {
        self.leaderboards.get(&dimension).and_then(BoardResult::board)
    }
}

/// A pure function of its inputs: identical inputs give bit-identical output.
pub fn compute_aggregates(input: &AggregateInput, cfg: &AggregateConfig) -> Aggregates {
    let kept: Vec<PreferenceRecord> = input
        .records
        .iter()
        .filter(|r| !input.banned.contains(&r.participant_id))
        .cloned()
        .collect();

    let mut leaderboards = BTreeMap::new();
    let global_data = BattleOutcomeSet::from_records(&kept, Dimension::Global, &input.registry);
    let global = par_build_leaderboard(&global_data, &cfg.fit, None);
    for dim in [Dimension::Content, Dimension::Language] {
        let data = BattleOutcomeSet::from_records(&kept, dim, &input.registry);
        let board = par_build_leaderboard(&data, &cfg.fit, global.as_ref().ok());
        leaderboards.insert(dim, to_result(board));
    }
    leaderboards.insert(Dimension::Global, to_result(global));

    let matrices = Dimension::ALL
        .iter()
        .map(|d| (*d, pair_matrices(&input.records, *d, &input.banned)))
        .collect();

    let participants: Vec<Participant> = input
        .participants
        .iter()
        .filter(|p| !input.banned.contains(&p.participant_id))
        .cloned()
        .collect();
    let demographics = demographics_breakdown(&participants, &kept);

    let arena_scores: Vec<(Dimension, Vec<(ModelId, f64)>)> = leaderboards
        .iter()
        .filter_map(|(d, b)| b.board().map(|b| (*d, b.scores())))
        .collect();
    let correlations = if input.benchmarks.is_empty() {
        Vec::new()
    } else {
        correlation_table(&input.benchmarks, &cfg.suite, &arena_scores, None)
    };

    let flags = input
        .activity
        .iter()
        .filter(|(p, _)| !input.banned.contains(*p))
        .flat_map(|(p, a)| flag_participant(p, a, &cfg.moderation))
        .collect();

    Aggregates {
        seq: input.seq,
        leaderboards,
        matrices,
        demographics,
        correlations,
        flags,
    }
}

fn to_result(r: Result<Leaderboard, RankingError>) -> BoardResult {
    match r {
        Ok(b) => BoardResult::Ok(b),
        Err(e) => BoardResult::Err {
            error: e.to_string(),
        },
    }
}
