//! Open dataset export: one JSON line per judged battle, in model space,
//! without usernames or emails.

use std::io::{BufRead, Write};

use arena_core::domain::{
    BattleId, Dimension, Education, ModelId, Outcome, ParticipantId, PreferenceRecord,
    Proficiency, Slot, Timestamp,
};
use serde::{Deserialize, Serialize};

use crate::state::ArenaState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportTurn {
    pub user_message: String,
    pub response_model_a: String,
    pub response_model_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRecord {
    pub battle_id: BattleId,
    /// Opaque pseudonym; the account behind it is not exported.
    pub participant_id: ParticipantId,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub transcript: Vec<ExportTurn>,
    pub outcome_content: Outcome,
    pub outcome_language: Outcome,
    pub outcome_global: Outcome,
    pub education: Education,
    pub proficiency: Proficiency,
    pub timestamp: Timestamp,
}

impl ExportRecord {
    pub fn outcome(&self, d: Dimension) -> Outcome {
        match d {
            Dimension::Content => self.outcome_content,
            Dimension::Language => self.outcome_language,
            Dimension::Global => self.outcome_global,
        }
    }

    pub fn to_record(&self) -> PreferenceRecord {
        PreferenceRecord {
            battle_id: self.battle_id,
            participant_id: self.participant_id.clone(),
            model_a: self.model_a.clone(),
            model_b: self.model_b.clone(),
            outcome_content: self.outcome_content,
            outcome_language: self.outcome_language,
            outcome_global: self.outcome_global,
            education: self.education,
            proficiency: self.proficiency,
            timestamp: self.timestamp,
        }
    }
}

pub fn export_records(state: &ArenaState, ban_filter: bool) -> Vec<ExportRecord> {
    state
        .records
        .iter()
        .filter(|r| !(ban_filter && state.is_banned(&r.participant_id)))
        .map(|r| {
            let battle = &state.battles[&r.battle_id];
            let a_slot = if battle.slot_a == r.model_a { Slot::A } else { Slot::B };
            let transcript = battle
                .turns
                .iter()
                .map(|t| ExportTurn {
                    user_message: t.user_message.clone(),
                    response_model_a: t.response(a_slot).to_string(),
                    response_model_b: t.response(a_slot.other()).to_string(),
                })
                .collect();
            ExportRecord {
                battle_id: r.battle_id,
                participant_id: r.participant_id.clone(),
                model_a: r.model_a.clone(),
                model_b: r.model_b.clone(),
                transcript,
                outcome_content: r.outcome_content,
                outcome_language: r.outcome_language,
                outcome_global: r.outcome_global,
                education: r.education,
                proficiency: r.proficiency,
                timestamp: r.timestamp,
            }
        })
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[ExportRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(records: &[ExportRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ExportRecord>, ImportError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ImportError::Line { line: i + 1, source })?);
    }
    Ok(out)
}
