//! In-memory arena state, a pure fold over the event log.

use std::collections::{BTreeMap, BTreeSet};

use arena_core::domain::{
    Battle, BattleId, BattleStatus, BenchmarkScore, ModelId, Participant, ParticipantId,
    PreferenceRecord,
};
use arena_core::moderation::{control_passed, JudgmentActivity, ParticipantActivity};
use arena_core::pairing::{ModelPair, PairCounts};
use arena_core::preference::commit_judgment;
use serde::{Deserialize, Serialize};

use crate::events::{ConfigChange, Event, EventLogEntry};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArenaState {
    pub last_seq: u64,
    pub participants: BTreeMap<ParticipantId, Participant>,
    pub usernames: BTreeSet<String>,
    pub battles: BTreeMap<BattleId, Battle>,
    pub open_battle: BTreeMap<ParticipantId, BattleId>,
    pub last_pair: BTreeMap<ParticipantId, ModelPair>,
    #[serde(with = "pair_counts")]
    pub pair_counts: PairCounts,
    /// One per judged, non-control battle, in commit order.
    pub records: Vec<PreferenceRecord>,
    pub banned: BTreeSet<ParticipantId>,
    pub benchmarks: Vec<BenchmarkScore>,
    pub inactive: BTreeSet<ModelId>,
    pub activity: BTreeMap<ParticipantId, ParticipantActivity>,
    pub next_battle: u64,
    pub next_participant: u64,
    /// Entries whose preconditions no longer held on replay.
    pub skipped_events: u64,
}

mod pair_counts {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(counts: &PairCounts, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(&ModelPair, &u64)> = counts.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PairCounts, D::Error> {
        let v: Vec<(ModelPair, u64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl ArenaState {
    pub fn participant_id_for(n: u64) -> ParticipantId {
        ParticipantId(format!("p{n:06}"))
    }

    pub fn next_participant_id(&self) -> ParticipantId {
        Self::participant_id_for(self.next_participant)
    }

    pub fn next_battle_id(&self) -> BattleId {
        BattleId(self.next_battle)
    }

    pub fn is_banned(&self, id: &ParticipantId) -> bool {
        self.banned.contains(id)
    }

    /// Records that count towards aggregates.
    pub fn ranked_records(&self) -> Vec<PreferenceRecord> {
        self.records
            .iter()
            .filter(|r| !self.banned.contains(&r.participant_id))
            .cloned()
            .collect()
    }

    pub fn apply(&mut self, entry: &EventLogEntry) {
        self.last_seq = entry.seq;
        let now = entry.timestamp;
        match &entry.event {
            Event::Registration { participant } => {
                self.usernames.insert(participant.username.clone());
                self.participants
                    .insert(participant.participant_id.clone(), participant.clone());
                self.next_participant += 1;
            }
            Event::BattleCreated {
                battle_id,
                participant_id,
                slot_a,
                slot_b,
                control_slot,
                discarded,
            } => {
                if let Some(old) = discarded.and_then(|d| self.battles.get_mut(&d)) {
                    if old.status == BattleStatus::Open {
                        old.status = BattleStatus::Discarded;
                    }
                }
                let Ok(mut battle) =
                    Battle::new(*battle_id, participant_id.clone(), slot_a.clone(), slot_b.clone(), now)
                else {
                    self.skipped_events += 1;
                    return;
                };
                if let Some(slot) = control_slot {
                    battle = battle.with_control(*slot);
                }
                let pair = ModelPair::new(slot_a.clone(), slot_b.clone());
                *self.pair_counts.entry(pair.clone()).or_insert(0) += 1;
                self.last_pair.insert(participant_id.clone(), pair);
                self.open_battle.insert(participant_id.clone(), *battle_id);
                self.battles.insert(*battle_id, battle);
                self.next_battle = self.next_battle.max(battle_id.0 + 1);
            }
            Event::Turn { battle_id, turn, .. } => {
                let Some(battle) = self.battles.get_mut(battle_id) else {
                    self.skipped_events += 1;
                    return;
                };
                match turn {
                    Some(t) => {
                        self.activity
                            .entry(battle.participant_id.clone())
                            .or_default()
                            .prompts
                            .push(t.user_message.clone());
                        battle.turns.push(t.clone());
                    }
                    None => battle.degraded = true,
                }
            }
            Event::Judgment {
                battle_id,
                judgment,
            } => {
                let Some(participant) = self
                    .battles
                    .get(battle_id)
                    .and_then(|b| self.participants.get(&b.participant_id))
                    .cloned()
                else {
                    self.skipped_events += 1;
                    return;
                };
                let battle = self.battles.get_mut(battle_id).expect("battle looked up above");
                match commit_judgment(battle, *judgment, &participant, now) {
                    Ok(record) => {
                        let control = battle
                            .control_slot
                            .filter(|_| battle.is_control)
                            .map(|slot| control_passed(judgment, slot));
                        self.activity
                            .entry(participant.participant_id.clone())
                            .or_default()
                            .judgments
                            .push(JudgmentActivity {
                                judged_at: now,
                                content_choice: judgment.content_choice,
                                control,
                            });
                        if self.open_battle.get(&participant.participant_id) == Some(battle_id) {
                            self.open_battle.remove(&participant.participant_id);
                        }
                        // control battles carry a doctored answer; they only feed moderation
                        if control.is_none() {
                            self.records.push(record);
                        }
                    }
                    Err(_) => self.skipped_events += 1,
                }
            }
            Event::Ban { participant_id } => {
                if let Some(p) = self.participants.get_mut(participant_id) {
                    p.banned = true;
                }
                self.banned.insert(participant_id.clone());
            }
            Event::Unban { participant_id } => {
                if let Some(p) = self.participants.get_mut(participant_id) {
                    p.banned = false;
                }
                self.banned.remove(participant_id);
            }
            Event::ConfigChange { change } => match change {
                ConfigChange::Benchmarks { scores } => self.benchmarks = scores.clone(),
                ConfigChange::ModelActive { model_id, active } => {
                    if *active {
                        self.inactive.remove(model_id);
                    } else {
                        self.inactive.insert(model_id.clone());
                    }
                }
            },
        }
    }
}
