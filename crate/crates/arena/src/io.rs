//! CSV tables in and out.

use std::io::{Read, Write};

use arena_core::analytics::CorrelationResult;
use arena_core::domain::{BenchmarkScore, ModelId};
use arena_core::moderation::Flag;
use arena_core::ranking::{Leaderboard, PairMatrix};
use serde::{Deserialize, Serialize};

pub fn read_benchmarks<R: Read>(input: R) -> Result<Vec<BenchmarkScore>, csv::Error> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .collect()
}

pub fn write_benchmarks<W: Write>(scores: &[BenchmarkScore], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LeaderboardRow<'a> {
    dimension: &'a str,
    rank: u32,
    model_id: &'a str,
    score: f64,
    ci_low_delta: f64,
    ci_high_delta: f64,
    n_battles: u64,
    rank_delta_vs_global: Option<i64>,
}

pub fn write_leaderboard<W: Write>(board: &Leaderboard, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for e in &board.estimates {
        w.serialize(LeaderboardRow {
            dimension: board.dimension.label(),
            rank: board.rank(&e.model_id).unwrap_or(0),
            model_id: e.model_id.as_str(),
            score: e.score,
            ci_low_delta: e.ci_low_delta,
            ci_high_delta: e.ci_high_delta,
            n_battles: e.n_battles,
            rank_delta_vs_global: board.rank_delta(&e.model_id),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct MatrixRow<'a> {
    dimension: &'a str,
    row_model: &'a str,
    column_model: &'a str,
    win_rate: Option<f64>,
    tie_rate: Option<f64>,
    battle_count: u64,
}

/// Long format: one line per ordered pair of distinct models.
pub fn write_matrix<W: Write>(m: &PairMatrix, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for (i, a) in m.models.iter().enumerate() {
        for (j, b) in m.models.iter().enumerate() {
            if i == j {
                continue;
            }
            w.serialize(MatrixRow {
                dimension: m.dimension.label(),
                row_model: a.as_str(),
                column_model: b.as_str(),
                win_rate: m.win_rate[i][j],
                tie_rate: m.tie_rate[i][j],
                battle_count: m.battle_count[i][j].unwrap_or(0),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CorrelationRow<'a> {
    benchmark_language: &'a str,
    arena_dimension: &'a str,
    rho: f64,
    p_value: f64,
    n: usize,
    method: &'a str,
}

pub fn write_correlations<W: Write>(rows: &[CorrelationResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for c in rows {
        w.serialize(CorrelationRow {
            benchmark_language: c.benchmark_language.label(),
            arena_dimension: c.arena_dimension.label(),
            rho: c.rho,
            p_value: c.p_value,
            n: c.n,
            method: match c.method {
                arena_core::stats::PValueMethod::ExactPermutation => "exact_permutation",
                arena_core::stats::PValueMethod::StudentT => "student_t",
            },
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FlagRow<'a> {
    participant_id: &'a str,
    kind: &'a str,
    metric: f64,
    sample: usize,
    evidence: &'a str,
}

pub fn write_flags<W: Write>(flags: &[Flag], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for f in flags {
        w.serialize(FlagRow {
            participant_id: f.participant_id.as_str(),
            kind: f.kind.label(),
            metric: f.metric,
            sample: f.sample,
            evidence: &f.evidence,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Renders a CSV writer call into a string.
pub fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("csv into memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// One row of a published leaderboard table (global, content and language
/// score, rank and interval deltas per model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedBoardRow {
    pub model_id: ModelId,
    pub global_rank: u32,
    pub global_score: f64,
    pub global_ci_high: f64,
    pub global_ci_low: f64,
    pub content_rank: u32,
    pub content_score: f64,
    pub content_ci_high: f64,
    pub content_ci_low: f64,
    pub language_rank: u32,
    pub language_score: f64,
    pub language_ci_high: f64,
    pub language_ci_low: f64,
}

pub fn read_published_board<R: Read>(input: R) -> Result<Vec<PublishedBoardRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedAverage {
    pub model_id: ModelId,
    pub language: arena_core::domain::Language,
    pub average: f64,
}

pub fn read_published_averages<R: Read>(input: R) -> Result<Vec<PublishedAverage>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use arena_core::domain::Language;

    #[test]
    fn benchmarks_round_trip() {
        let text = "model_id,benchmark_id,language,accuracy\nm1,mmlu,EU,50.5\nm2, belebele ,EN,61\n";
        let rows = read_benchmarks(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].benchmark_id, "belebele");
        assert_eq!(rows[1].language, Language::En);
        let out = csv_string(|b| write_benchmarks(&rows, b));
        assert_eq!(read_benchmarks(out.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn bad_language_is_an_error() {
        let text = "model_id,benchmark_id,language,accuracy\nm1,mmlu,FR,50\n";
        assert!(read_benchmarks(text.as_bytes()).is_err());
    }
}
