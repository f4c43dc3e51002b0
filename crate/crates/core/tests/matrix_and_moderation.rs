use std::collections::BTreeSet;

use arena_core::domain::{
    BattleId, Dimension, Education, ModelId, Outcome, ParticipantId, PreferenceRecord, Proficiency,
    Timestamp,
};
use arena_core::moderation::schedule_control;
use arena_core::ranking::pair_matrices;
use arena_core::rng::stream_rng;
use proptest::prelude::*;

fn record(i: u64, p: &str, a: usize, b: usize, o: Outcome) -> PreferenceRecord {
    let (a, b, o) = if a < b { (a, b, o) } else { (b, a, o.swapped()) };
    PreferenceRecord {
        battle_id: BattleId(i),
        participant_id: ParticipantId::from(p),
        model_a: ModelId(format!("m{a}")),
        model_b: ModelId(format!("m{b}")),
        outcome_content: o,
        outcome_language: o.swapped(),
        outcome_global: o,
        education: Education::Bachelor,
        proficiency: Proficiency::Advanced,
        timestamp: Timestamp(i),
    }
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::WinA), Just(Outcome::WinB), Just(Outcome::Tie)]
}

proptest! {
    #[test]
    fn matrix_identities(raw in prop::collection::vec((0usize..5, 0usize..5, outcome(), 0usize..3), 1..120)) {
        let records: Vec<_> = raw
            .iter()
            .enumerate()
            .filter(|(_, (a, b, _, _))| a != b)
            .map(|(i, &(a, b, o, p))| record(i as u64, &format!("p{p}"), a, b, o))
            .collect();
        let banned: BTreeSet<ParticipantId> = [ParticipantId::from("p2")].into();
        for dim in Dimension::ALL {
            let mx = pair_matrices(&records, *dim, &banned);
            let k = mx.models.len();
            for i in 0..k {
                prop_assert!(mx.win_rate[i][i].is_none() && mx.battle_count[i][i].is_none());
                for j in 0..k {
                    prop_assert_eq!(mx.battle_count[i][j], mx.battle_count[j][i]);
                    prop_assert_eq!(mx.tie_rate[i][j], mx.tie_rate[j][i]);
                    if let (Some(w), Some(v), Some(t)) = (mx.win_rate[i][j], mx.win_rate[j][i], mx.tie_rate[i][j]) {
                        prop_assert_eq!(w + v + t, 1.0);
                    }
                }
            }
            let counted: u64 = mx.pair_counts().iter().sum();
            let kept = records.iter().filter(|r| r.participant_id.as_str() != "p2").count();
            prop_assert_eq!(counted, kept as u64);
        }
    }
}

#[test]
fn control_rate_is_close_to_five_percent() {
    let mut rng = stream_rng(2024, 3);
    let n = 20_000;
    let hits = (0..n).filter(|_| schedule_control(&mut rng, 0.05)).count();
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.05).abs() < 0.01, "{rate}");
}
