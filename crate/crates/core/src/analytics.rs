//! Static-benchmark tables, benchmark–arena correlation, demographics and
//! per-language trade-offs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    BenchmarkScore, Dimension, Education, Language, ModelId, Participant, PreferenceRecord,
    Proficiency,
};
use crate::stats::{spearman, PValueMethod, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("duplicate benchmark row for ({model}, {benchmark}, {language})")]
    DuplicateKey {
        model: ModelId,
        benchmark: String,
        language: Language,
    },
    #[error("accuracy {value} for ({model}, {benchmark}) outside [0, 100]")]
    OutOfRange {
        model: ModelId,
        benchmark: String,
        value: f64,
    },
    #[error("no scores for {model} in {language}")]
    NoScores { model: ModelId, language: Language },
    #[error("{model} lacks {benchmark} in {language}")]
    MissingBenchmark {
        model: ModelId,
        benchmark: String,
        language: Language,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub const TRADEOFF_BENCHMARKS: [&str; 4] = ["belebele", "mgsm", "mmlu", "xstorycloze"];

/// The nine Basque benchmarks of the headline results table.
pub const SUMMARY_BENCHMARKS_EU: [&str; 9] = [
    "belebele",
    "bertaqa_global",
    "bertaqa_local",
    "eus_proficiency",
    "eus_reading",
    "eus_trivia",
    "eus_exams",
    "mgsm",
    "mmlu",
];

/// Benchmark ids averaged per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub benchmarks: BTreeMap<Language, Vec<String>>,
}

impl Default for BenchmarkSuite {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut benchmarks = BTreeMap::new();
        benchmarks.insert(
            Language::Eu,
            owned(&[
                "arc_c",
                "arc_e",
                "belebele",
                "bertaqa_global",
                "bertaqa_local",
                "blimp",
                "eus_exams",
                "eus_proficiency",
                "eus_reading",
                "eus_trivia",
                "mgsm",
                "mmlu",
                "piqa",
                "xstorycloze",
            ]),
        );
        benchmarks.insert(
            Language::En,
            owned(&[
                "arc_c",
                "arc_e",
                "belebele",
                "bertaqa_global",
                "bertaqa_local",
                "mgsm",
                "mmlu",
                "piqa",
                "xstorycloze",
            ]),
        );
        benchmarks.insert(Language::Es, owned(&TRADEOFF_BENCHMARKS));
        Self { benchmarks }
    }
}

impl BenchmarkSuite {
    pub fn for_language(&self, language: Language) -> Vec<&str> {
        self.benchmarks
            .get(&language)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }
}

/// Range and uniqueness checks on ingested rows.
pub fn validate_scores(rows: Vec<BenchmarkScore>) -> Result<Vec<BenchmarkScore>, AnalyticsError> {
    let mut seen = BTreeSet::new();
    for r in &rows {
        if !(0.0..=100.0).contains(&r.accuracy) {
            return Err(AnalyticsError::OutOfRange {
                model: r.model_id.clone(),
                benchmark: r.benchmark_id.clone(),
                value: r.accuracy,
            });
        }
        if !seen.insert((&r.model_id, r.benchmark_id.as_str(), r.language)) {
            return Err(AnalyticsError::DuplicateKey {
                model: r.model_id.clone(),
                benchmark: r.benchmark_id.clone(),
                language: r.language,
            });
        }
    }
    Ok(rows)
}

/// Unweighted mean over the listed benchmarks the model has scores for.
pub fn benchmark_average(
    scores: &[BenchmarkScore],
    model: &ModelId,
    language: Language,
    benchmarks: &[&str],
) -> Result<f64, AnalyticsError> {
    let values: Vec<f64> = scores
        .iter()
        .filter(|s| {
            &s.model_id == model
                && s.language == language
                && benchmarks.contains(&s.benchmark_id.as_str())
        })
        .map(|s| s.accuracy)
        .collect();
    if values.is_empty() {
        return Err(AnalyticsError::NoScores {
            model: model.clone(),
            language,
        });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub benchmark_language: Language,
    pub arena_dimension: Dimension,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// Spearman correlation between benchmark averages and arena scores over
/// models that have both (optionally restricted to `subset`).
pub fn correlate(
    scores: &[BenchmarkScore],
    suite: &BenchmarkSuite,
    language: Language,
    arena: &[(ModelId, f64)],
    dimension: Dimension,
    subset: Option<&[ModelId]>,
) -> Result<CorrelationResult, AnalyticsError> {
    let benchmarks = suite.for_language(language);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (model, arena_score) in arena {
        if subset.is_some_and(|s| !s.contains(model)) {
            continue;
        }
        if let Ok(avg) = benchmark_average(scores, model, language, &benchmarks) {
            xs.push(avg);
            ys.push(*arena_score);
        }
    }
    let c = spearman(&xs, &ys)?;
    Ok(CorrelationResult {
        benchmark_language: language,
        arena_dimension: dimension,
        rho: c.rho,
        p_value: c.p_value,
        n: c.n,
        method: c.method,
    })
}

/// Every (benchmark language × arena dimension) cell that can be computed.
pub fn correlation_table(
    scores: &[BenchmarkScore],
    suite: &BenchmarkSuite,
    arena: &[(Dimension, Vec<(ModelId, f64)>)],
    subset: Option<&[ModelId]>,
) -> Vec<CorrelationResult> {
    let mut out = Vec::new();
    for language in Language::ALL {
        for (dimension, board) in arena {
            if let Ok(c) = correlate(scores, suite, *language, board, *dimension, subset) {
                out.push(c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram<K: Ord> {
    pub counts: BTreeMap<K, u64>,
    pub total: u64,
}

impl<K: Ord + Copy> Histogram<K> {
    fn from_iter(items: impl IntoIterator<Item = K>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for k in items {
            *counts.entry(k).or_insert(0) += 1;
            total += 1;
        }
        Self { counts, total }
    }

    /// Normalised shares; empty for an empty histogram.
    pub fn fractions(&self) -> BTreeMap<K, f64> {
        if self.total == 0 {
            return BTreeMap::new();
        }
        self.counts
            .iter()
            .map(|(k, c)| (*k, *c as f64 / self.total as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub participants_by_education: Histogram<Education>,
    pub preferences_by_education: Histogram<Education>,
    pub participants_by_proficiency: Histogram<Proficiency>,
    pub preferences_by_proficiency: Histogram<Proficiency>,
}

/// Participant and preference histograms. Preferences use the demographics
/// snapshot stored on each record.
pub fn demographics_breakdown(
    participants: &[Participant],
    records: &[PreferenceRecord],
) -> Demographics {
    Demographics {
        participants_by_education: Histogram::from_iter(participants.iter().map(|p| p.education)),
        preferences_by_education: Histogram::from_iter(records.iter().map(|r| r.education)),
        participants_by_proficiency: Histogram::from_iter(
            participants.iter().map(|p| p.proficiency),
        ),
        preferences_by_proficiency: Histogram::from_iter(records.iter().map(|r| r.proficiency)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffEntry {
    pub variant: ModelId,
    pub backbone: ModelId,
    pub language: Language,
    /// Variant mean minus backbone mean, in accuracy points.
    pub delta_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub entries: Vec<TradeoffEntry>,
}

impl TradeoffReport {
    pub fn get(&self, variant: &ModelId, language: Language) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.variant == variant && e.language == language)
            .map(|e| e.delta_accuracy)
    }
}

fn strict_mean(
    scores: &[BenchmarkScore],
    model: &ModelId,
    language: Language,
    benchmarks: &[&str],
) -> Result<f64, AnalyticsError> {
    let mut sum = 0.0;
    for b in benchmarks {
        let s = scores
            .iter()
            .find(|s| &s.model_id == model && s.language == language && s.benchmark_id == *b)
            .ok_or_else(|| AnalyticsError::MissingBenchmark {
                model: model.clone(),
                benchmark: b.to_string(),
                language,
            })?;
        sum += s.accuracy;
    }
    Ok(sum / benchmarks.len() as f64)
}

/// Per-language mean accuracy change of each variant over its backbone.
/// Every benchmark must be present for both models.
pub fn language_tradeoffs(
    scores: &[BenchmarkScore],
    variants: &[(ModelId, ModelId)],
    languages: &[Language],
    benchmarks: &[&str],
) -> Result<TradeoffReport, AnalyticsError> {
    let mut entries = Vec::new();
    for (variant, backbone) in variants {
        for &language in languages {
            let v = strict_mean(scores, variant, language, benchmarks)?;
            let b = strict_mean(scores, backbone, language, benchmarks)?;
            entries.push(TradeoffEntry {
                variant: variant.clone(),
                backbone: backbone.clone(),
                language,
                delta_accuracy: v - b,
            });
        }
    }
    Ok(TradeoffReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BattleId, Outcome, Timestamp};

    fn score(model: &str, bench: &str, lang: Language, acc: f64) -> BenchmarkScore {
        BenchmarkScore {
            model_id: model.into(),
            benchmark_id: bench.into(),
            language: lang,
            accuracy: acc,
        }
    }

    #[test]
    fn validation() {
        let ok = alloc::vec![score("m", "belebele", Language::Eu, 80.0)];
        assert!(validate_scores(ok).is_ok());
        let high = alloc::vec![score("m", "belebele", Language::Eu, 120.0)];
        assert!(matches!(
            validate_scores(high),
            Err(AnalyticsError::OutOfRange { .. })
        ));
        let dup = alloc::vec![
            score("m", "belebele", Language::Eu, 80.0),
            score("m", "belebele", Language::Eu, 81.0)
        ];
        assert!(matches!(
            validate_scores(dup),
            Err(AnalyticsError::DuplicateKey { .. })
        ));
        // same benchmark in another language is a different key
        let other = alloc::vec![
            score("m", "belebele", Language::Eu, 80.0),
            score("m", "belebele", Language::En, 81.0)
        ];
        assert!(validate_scores(other).is_ok());
    }

    #[test]
    fn single_benchmark_average_is_identity() {
        let s = [score("m", "mgsm", Language::Es, 63.6)];
        assert_eq!(benchmark_average(&s, &"m".into(), Language::Es, &["mgsm"]).unwrap(), 63.6);
        assert!(matches!(
            benchmark_average(&s, &"m".into(), Language::Eu, &["mgsm"]),
            Err(AnalyticsError::NoScores { .. })
        ));
    }

    #[test]
    fn tradeoff_against_self_is_zero() {
        let s: Vec<_> = TRADEOFF_BENCHMARKS
            .iter()
            .enumerate()
            .map(|(i, b)| score("m", b, Language::Eu, 50.0 + i as f64))
            .collect();
        let r = language_tradeoffs(
            &s,
            &[("m".into(), "m".into())],
            &[Language::Eu],
            &TRADEOFF_BENCHMARKS,
        )
        .unwrap();
        assert_eq!(r.get(&"m".into(), Language::Eu), Some(0.0));
        let missing = language_tradeoffs(
            &s,
            &[("m".into(), "m".into())],
            &[Language::En],
            &TRADEOFF_BENCHMARKS,
        );
        assert!(matches!(missing, Err(AnalyticsError::MissingBenchmark { .. })));
    }

    #[test]
    fn demographics_small() {
        let p = |id: &str| Participant {
            participant_id: id.into(),
            username: id.into(),
            email: String::new(),
            education: Education::Bachelor,
            proficiency: Proficiency::Native,
            age_attested: true,
            banned: false,
            created_at: Timestamp(0),
        };
        let r = |id: u64, who: &str| PreferenceRecord {
            battle_id: BattleId(id),
            participant_id: who.into(),
            model_a: "a".into(),
            model_b: "b".into(),
            outcome_content: Outcome::Tie,
            outcome_language: Outcome::Tie,
            outcome_global: Outcome::Tie,
            education: Education::Bachelor,
            proficiency: Proficiency::Native,
            timestamp: Timestamp(id),
        };
        let d = demographics_breakdown(
            &[p("x"), p("y")],
            &[r(1, "x"), r(2, "x"), r(3, "x"), r(4, "y")],
        );
        assert_eq!(d.participants_by_education.total, 2);
        assert_eq!(d.preferences_by_education.total, 4);
        assert_eq!(d.participants_by_education.fractions()[&Education::Bachelor], 1.0);
        assert_eq!(d.preferences_by_proficiency.fractions()[&Proficiency::Native], 1.0);

        let empty = demographics_breakdown(&[], &[]);
        assert_eq!(empty.participants_by_education.total, 0);
        assert!(empty.preferences_by_education.fractions().is_empty());
    }
}
