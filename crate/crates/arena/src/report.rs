//! Plain-text report of an aggregate run.
//!
//! Layout: one `[section]` header per block, then `key: value` lines or
//! whitespace-aligned tables. Stable enough to diff between runs.

use std::fmt::Write;

use arena_core::domain::Dimension;

use crate::aggregate::{Aggregates, BoardResult};

pub fn render(a: &Aggregates) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[aggregates]");
    let _ = writeln!(s, "last_seq: {}", a.seq);
    for dim in Dimension::ALL {
        let _ = writeln!(s, "\n[leaderboard {dim}]");
        match a.leaderboards.get(dim) {
            Some(BoardResult::Ok(b)) => {
                let _ = writeln!(
                    s,
                    "battles: {}  ties: {}  solver: {:?}  iterations: {}  bootstrap: {} used, {} skipped",
                    b.battles, b.ties, b.solver, b.iterations, b.bootstrap_used, b.bootstrap_skipped
                );
                let _ = writeln!(
                    s,
                    "{:>4}  {:<28} {:>8} {:>8} {:>8} {:>7} {:>6}",
                    "rank", "model", "score", "ci_low", "ci_high", "n", "delta"
                );
                for e in &b.estimates {
                    let delta = b
                        .rank_delta(&e.model_id)
                        .map(|d| format!("{d:+}"))
                        .unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        s,
                        "{:>4}  {:<28} {:>8.1} {:>8.1} {:>8.1} {:>7} {:>6}",
                        b.rank(&e.model_id).unwrap_or(0),
                        e.model_id,
                        e.score,
                        e.ci_low_delta,
                        e.ci_high_delta,
                        e.n_battles,
                        delta
                    );
                }
                if !b.excluded.is_empty() {
                    let names: Vec<&str> = b.excluded.iter().map(|m| m.as_str()).collect();
                    let _ = writeln!(s, "excluded: {}", names.join(", "));
                }
            }
            Some(BoardResult::Err { error }) => {
                let _ = writeln!(s, "error: {error}");
            }
            None => {
                let _ = writeln!(s, "error: not computed");
            }
        }
    }

    let _ = writeln!(s, "\n[demographics]");
    let d = &a.demographics;
    for (label, h) in [
        ("participants_by_education", &d.participants_by_education),
        ("preferences_by_education", &d.preferences_by_education),
    ] {
        let cells: Vec<String> = h.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(s, "{label}: {}", cells.join(" "));
    }
    for (label, h) in [
        ("participants_by_proficiency", &d.participants_by_proficiency),
        ("preferences_by_proficiency", &d.preferences_by_proficiency),
    ] {
        let cells: Vec<String> = h.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(s, "{label}: {}", cells.join(" "));
    }

    let _ = writeln!(s, "\n[correlations]");
    for c in &a.correlations {
        let _ = writeln!(
            s,
            "{} vs {}: rho {:.3} p {:.2e} n {} ({:?})",
            c.benchmark_language, c.arena_dimension, c.rho, c.p_value, c.n, c.method
        );
    }

    let _ = writeln!(s, "\n[flags]");
    for f in &a.flags {
        let _ = writeln!(
            s,
            "{} {} metric {:.3} over {}: {}",
            f.participant_id,
            f.kind.label(),
            f.metric,
            f.sample,
            f.evidence
        );
    }
    s
}
