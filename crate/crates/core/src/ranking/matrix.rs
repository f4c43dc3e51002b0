use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{Dimension, ModelId, Outcome, ParticipantId, PreferenceRecord};

/// Row-vs-column win rates, tie rates and battle counts.
///
/// Cells without battles (and the diagonal) are `None`. Where a pair has
/// battles, `win_rate[i][j] + win_rate[j][i] + tie_rate[i][j] == 1.0`
/// holds exactly in floating point, because the tie rate is stored as the
/// complement of the two win rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    pub dimension: Dimension,
    pub models: Vec<ModelId>,
    pub win_rate: Vec<Vec<Option<f64>>>,
    pub tie_rate: Vec<Vec<Option<f64>>>,
    pub battle_count: Vec<Vec<Option<u64>>>,
}

impl PairMatrix {
    pub fn index_of(&self, model: &ModelId) -> Option<usize> {
        self.models.iter().position(|m| m == model)
    }

    pub fn count(&self, a: &ModelId, b: &ModelId) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.battle_count[i][j].unwrap_or(0),
            _ => 0,
        }
    }

    /// Counts for each unordered pair `i < j`.
    pub fn pair_counts(&self) -> Vec<u64> {
        let k = self.models.len();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                out.push(self.battle_count[i][j].unwrap_or(0));
            }
        }
        out
    }
}

/// Builds the matrices for `dimension`. Records of banned participants do
/// not count, but their models stay in the index so the shape is stable.
pub fn pair_matrices(
    records: &[PreferenceRecord],
    dimension: Dimension,
    banned: &BTreeSet<ParticipantId>,
) -> PairMatrix {
    let mut models: Vec<ModelId> = records
        .iter()
        .flat_map(|r| [r.model_a.clone(), r.model_b.clone()])
        .collect();
    models.sort();
    models.dedup();
    let pos: BTreeMap<&ModelId, usize> = models.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let k = models.len();

    let mut wins = vec![vec![0u64; k]; k];
    let mut ties = vec![vec![0u64; k]; k];
    let mut counts = vec![vec![0u64; k]; k];
    for r in records.iter().filter(|r| !banned.contains(&r.participant_id)) {
        let (i, j) = (pos[&r.model_a], pos[&r.model_b]);
        if i == j {
            continue;
        }
        counts[i][j] += 1;
        counts[j][i] += 1;
        match r.outcome(dimension) {
            Outcome::WinA => wins[i][j] += 1,
            Outcome::WinB => wins[j][i] += 1,
            Outcome::Tie => {
                ties[i][j] += 1;
                ties[j][i] += 1;
            }
        }
    }

    let mut win_rate = vec![vec![None; k]; k];
    let mut tie_rate = vec![vec![None; k]; k];
    let mut battle_count = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            battle_count[i][j] = Some(counts[i][j]);
            if counts[i][j] > 0 {
                let n = counts[i][j] as f64;
                win_rate[i][j] = Some(wins[i][j] as f64 / n);
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            if let (Some(w), Some(l)) = (win_rate[i][j], win_rate[j][i]) {
                tie_rate[i][j] = Some(1.0 - (w + l));
            }
        }
    }
    PairMatrix {
        dimension,
        models,
        win_rate,
        tie_rate,
        battle_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BattleId, Education, Proficiency, Timestamp};

    fn rec(id: u64, who: &str, a: &str, b: &str, o: Outcome) -> PreferenceRecord {
        PreferenceRecord {
            battle_id: BattleId(id),
            participant_id: who.into(),
            model_a: a.into(),
            model_b: b.into(),
            outcome_content: o,
            outcome_language: o,
            outcome_global: o,
            education: Education::Bachelor,
            proficiency: Proficiency::Native,
            timestamp: Timestamp(id),
        }
    }

    #[test]
    fn direct_counts() {
        let recs = [
            rec(1, "p", "a", "b", Outcome::WinA),
            rec(2, "p", "a", "b", Outcome::WinA),
            rec(3, "p", "a", "b", Outcome::Tie),
        ];
        let m = pair_matrices(&recs, Dimension::Global, &BTreeSet::new());
        assert_eq!(m.win_rate[0][1], Some(2.0 / 3.0));
        assert_eq!(m.win_rate[1][0], Some(0.0));
        let t = m.tie_rate[0][1].unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.battle_count[0][1], Some(3));
        assert_eq!(m.battle_count[1][0], Some(3));
        assert_eq!(m.battle_count[0][0], None);
    }

    #[test]
    fn empty_records() {
        let m = pair_matrices(&[], Dimension::Content, &BTreeSet::new());
        assert!(m.models.is_empty());
        assert!(m.win_rate.is_empty());
    }

    #[test]
    fn banned_records_drop_out() {
        let recs = [
            rec(1, "spam", "x", "y", Outcome::WinA),
            rec(2, "ok", "x", "z", Outcome::WinB),
        ];
        let banned: BTreeSet<ParticipantId> = [ParticipantId::from("spam")].into_iter().collect();
        let m = pair_matrices(&recs, Dimension::Global, &banned);
        assert_eq!(m.count(&"x".into(), &"y".into()), 0);
        assert_eq!(m.win_rate[0][1], None);
        assert_eq!(m.count(&"x".into(), &"z".into()), 1);
    }
}
