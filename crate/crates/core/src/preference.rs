//! Two-dimension judgment protocol.
//!
//! Participants answer A / B / TIE for content and for language. Only when
//! the two answers point at opposite slots is a third, overall question asked;
//! a tie on one dimension defers to the decisive one.

use alloc::vec::Vec;

use thiserror::Error;

use crate::domain::{
    Battle, BattleStatus, Choice, Judgment, Outcome, Participant, PreferenceRecord, Slot,
    Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgmentError {
    #[error("content and language disagree; the overall answer is required")]
    MissingOverall,
    #[error("an overall answer was given although content and language do not conflict")]
    UnexpectedOverall,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error("battle is no longer open")]
    BattleClosed,
    #[error("battle has no completed turn")]
    NoTurns,
    #[error("battle is degraded after a backend timeout")]
    Degraded,
    #[error("battle belongs to another participant")]
    WrongParticipant,
    #[error("invalid judgment: {0}")]
    InvalidJudgment(#[from] JudgmentError),
}

/// True exactly when content and language prefer opposite slots.
pub fn needs_overall(content: Choice, language: Choice) -> bool {
    matches!(
        (content, language),
        (Choice::A, Choice::B) | (Choice::B, Choice::A)
    )
}

/// Final slot-space choice for a judgment.
pub fn derive_global(
    content: Choice,
    language: Choice,
    overall: Option<Choice>,
) -> Result<Choice, JudgmentError> {
    match (needs_overall(content, language), overall) {
        (true, Some(o)) => Ok(o),
        (true, None) => Err(JudgmentError::MissingOverall),
        (false, Some(_)) => Err(JudgmentError::UnexpectedOverall),
        (false, None) => Ok(match (content, language) {
            (Choice::Tie, other) | (other, Choice::Tie) => other,
            // agreement
            (c, _) => c,
        }),
    }
}

pub fn validate_judgment(judgment: &Judgment) -> Result<Choice, JudgmentError> {
    derive_global(
        judgment.content_choice,
        judgment.language_choice,
        judgment.overall_choice,
    )
}

/// Maps a slot-space choice to a model-space outcome, where `a_slot` is the
/// slot holding the record's `model_a`.
pub fn to_model_outcome(choice: Choice, a_slot: Slot) -> Outcome {
    match choice.slot() {
        None => Outcome::Tie,
        Some(s) if s == a_slot => Outcome::WinA,
        Some(_) => Outcome::WinB,
    }
}

/// Inverse of [`to_model_outcome`].
pub fn to_slot_choice(outcome: Outcome, a_slot: Slot) -> Choice {
    let pick = |slot: Slot| match slot {
        Slot::A => Choice::A,
        Slot::B => Choice::B,
    };
    match outcome {
        Outcome::Tie => Choice::Tie,
        Outcome::WinA => pick(a_slot),
        Outcome::WinB => pick(a_slot.other()),
    }
}

/// De-anonymises a judgment into a preference record.
pub fn resolve_record(
    battle: &Battle,
    judgment: &Judgment,
    participant: &Participant,
    timestamp: Timestamp,
) -> Result<PreferenceRecord, JudgmentError> {
    let global = validate_judgment(judgment)?;
    let (model_a, model_b, a_slot) = if battle.slot_a <= battle.slot_b {
        (battle.slot_a.clone(), battle.slot_b.clone(), Slot::A)
    } else {
        (battle.slot_b.clone(), battle.slot_a.clone(), Slot::B)
    };
    Ok(PreferenceRecord {
        battle_id: battle.battle_id,
        participant_id: battle.participant_id.clone(),
        model_a,
        model_b,
        outcome_content: to_model_outcome(judgment.content_choice, a_slot),
        outcome_language: to_model_outcome(judgment.language_choice, a_slot),
        outcome_global: to_model_outcome(global, a_slot),
        education: participant.education,
        proficiency: participant.proficiency,
        timestamp,
    })
}

/// Commits a judgment: the battle becomes `Judged` and the de-anonymised
/// record is returned for persistence.
pub fn commit_judgment(
    battle: &mut Battle,
    judgment: Judgment,
    participant: &Participant,
    now: Timestamp,
) -> Result<PreferenceRecord, CommitError> {
    check_commit(battle, &judgment, participant)?;
    let record = resolve_record(battle, &judgment, participant, now)?;
    battle.judgment = Some(judgment);
    battle.status = BattleStatus::Judged;
    battle.judged_at = Some(now);
    Ok(record)
}

/// All preconditions of [`commit_judgment`] without mutating anything.
pub fn check_commit(
    battle: &Battle,
    judgment: &Judgment,
    participant: &Participant,
) -> Result<(), CommitError> {
    if battle.status != BattleStatus::Open {
        return Err(CommitError::BattleClosed);
    }
    if battle.participant_id != participant.participant_id {
        return Err(CommitError::WrongParticipant);
    }
    if battle.degraded {
        return Err(CommitError::Degraded);
    }
    if battle.turns.is_empty() {
        return Err(CommitError::NoTurns);
    }
    validate_judgment(judgment)?;
    Ok(())
}

/// Every judgment the protocol accepts: 7 non-conflicting pairs plus the two
/// conflicting pairs with each of the three overall answers.
pub fn all_valid_judgments() -> Vec<Judgment> {
    let mut out = Vec::new();
    for c in Choice::ALL {
        for l in Choice::ALL {
            if needs_overall(c, l) {
                for o in Choice::ALL {
                    out.push(Judgment::new(c, l, Some(o)));
                }
            } else {
                out.push(Judgment::new(c, l, None));
            }
        }
    }
    out
}
