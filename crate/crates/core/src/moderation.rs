//! Annotator quality heuristics and control battles.
//!
//! Flags are evidence for a human reviewer. Nothing here bans anyone.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Choice, Judgment, ParticipantId, Slot, Timestamp};

pub const DEFAULT_CONTROL_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagKind {
    Rate,
    Position,
    Control,
    Degenerate,
}

impl FlagKind {
    pub fn label(self) -> &'static str {
        match self {
            FlagKind::Rate => "RATE",
            FlagKind::Position => "POSITION",
            FlagKind::Control => "CONTROL",
            FlagKind::Degenerate => "DEGENERATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub participant_id: ParticipantId,
    pub kind: FlagKind,
    /// The statistic that crossed its threshold.
    pub metric: f64,
    /// Number of observations behind `metric`.
    pub sample: usize,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModerationConfig {
    pub rate_min_judgments: usize,
    pub rate_max_median_interval_ms: u64,
    pub position_min_judgments: usize,
    pub position_share: f64,
    pub control_min_battles: usize,
    pub control_max_failure_rate: f64,
    pub degenerate_min_prompts: usize,
    pub degenerate_share: f64,
    pub degenerate_min_chars: usize,
}

impl Default for ModerationConfig {
    fn default() -> Self {
        Self {
            rate_min_judgments: 10,
            rate_max_median_interval_ms: 10_000,
            position_min_judgments: 20,
            position_share: 0.9,
            control_min_battles: 4,
            control_max_failure_rate: 0.5,
            degenerate_min_prompts: 10,
            degenerate_share: 0.8,
            degenerate_min_chars: 5,
        }
    }
}

/// One committed judgment as seen by the heuristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentActivity {
    pub judged_at: Timestamp,
    pub content_choice: Choice,
    /// `Some(passed)` for control battles.
    pub control: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantActivity {
    pub judgments: Vec<JudgmentActivity>,
    /// Every prompt the participant sent, in order.
    pub prompts: Vec<String>,
}

/// Bernoulli draw deciding whether the next battle is a control battle.
pub fn schedule_control<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> bool {
    rng.gen_bool(rate.clamp(0.0, 1.0))
}

/// A control battle is passed unless content prefers the degraded slot.
pub fn control_passed(judgment: &Judgment, control_slot: Slot) -> bool {
    judgment.content_choice.slot() != Some(control_slot)
}

/// What the control responder serves instead of a real answer: the first
/// quarter of the text, cut at a character boundary.
pub fn degrade_response(text: &str) -> String {
    let keep = text.chars().count() / 4;
    text.chars().take(keep).collect()
}

fn median_ms(mut values: Vec<u64>) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

pub fn flag_participant(
    participant_id: &ParticipantId,
    activity: &ParticipantActivity,
    cfg: &ModerationConfig,
) -> Vec<Flag> {
    let mut flags = Vec::new();
    let mut flag = |kind, metric, sample, evidence| {
        flags.push(Flag {
            participant_id: participant_id.clone(),
            kind,
            metric,
            sample,
            evidence,
        })
    };
    let js = &activity.judgments;

    if js.len() >= cfg.rate_min_judgments && js.len() >= 2 {
        let mut times: Vec<u64> = js.iter().map(|j| j.judged_at.millis()).collect();
        times.sort_unstable();
        let gaps: Vec<u64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let median = median_ms(gaps);
        if median < cfg.rate_max_median_interval_ms as f64 {
            flag(
                FlagKind::Rate,
                median / 1000.0,
                js.len(),
                format!(
                    "median interval {:.1}s between {} judgments",
                    median / 1000.0,
                    js.len()
                ),
            );
        }
    }

    if js.len() >= cfg.position_min_judgments {
        let a = js.iter().filter(|j| j.content_choice == Choice::A).count();
        let b = js.iter().filter(|j| j.content_choice == Choice::B).count();
        let (slot, same) = if a >= b { ("A", a) } else { ("B", b) };
        let share = same as f64 / js.len() as f64;
        if share >= cfg.position_share {
            flag(
                FlagKind::Position,
                share,
                js.len(),
                format!("chose slot {slot} in {same} of {} judgments", js.len()),
            );
        }
    }

    let controls: Vec<bool> = js.iter().filter_map(|j| j.control).collect();
    if controls.len() >= cfg.control_min_battles {
        let failed = controls.iter().filter(|passed| !**passed).count();
        let rate = failed as f64 / controls.len() as f64;
        if rate > cfg.control_max_failure_rate {
            flag(
                FlagKind::Control,
                rate,
                controls.len(),
                format!("failed {failed} of {} control battles", controls.len()),
            );
        }
    }

    let prompts = &activity.prompts;
    if prompts.len() >= cfg.degenerate_min_prompts {
        let mut seen = BTreeSet::new();
        let degenerate = prompts
            .iter()
            .filter(|p| {
                let short = p.trim().chars().count() < cfg.degenerate_min_chars;
                let duplicate = !seen.insert(p.as_str());
                short || duplicate
            })
            .count();
        let share = degenerate as f64 / prompts.len() as f64;
        if share >= cfg.degenerate_share {
            flag(
                FlagKind::Degenerate,
                share,
                prompts.len(),
                format!(
                    "{degenerate} of {} prompts are too short or repeated",
                    prompts.len()
                ),
            );
        }
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::string::ToString;

    fn activity(gap_ms: u64, n: usize, choice: impl Fn(usize) -> Choice) -> ParticipantActivity {
        ParticipantActivity {
            judgments: (0..n)
                .map(|i| JudgmentActivity {
                    judged_at: Timestamp(1_000_000 + i as u64 * gap_ms),
                    content_choice: choice(i),
                    control: None,
                })
                .collect(),
            prompts: (0..n).map(|i| format!("question number {i}")).collect(),
        }
    }

    fn kinds(flags: &[Flag]) -> Vec<FlagKind> {
        flags.iter().map(|f| f.kind).collect()
    }

    fn mixed(i: usize) -> Choice {
        Choice::ALL[i % 3]
    }

    #[test]
    fn fast_judgments_raise_rate() {
        let a = activity(3_000, 30, mixed);
        let flags = flag_participant(&"p".into(), &a, &ModerationConfig::default());
        assert_eq!(kinds(&flags), [FlagKind::Rate]);
        assert_eq!(flags[0].metric, 3.0);
    }

    #[test]
    fn rate_needs_ten_judgments() {
        let a = activity(1_000, 9, mixed);
        assert!(flag_participant(&"p".into(), &a, &ModerationConfig::default()).is_empty());
    }

    #[test]
    fn always_slot_a_raises_position() {
        let a = activity(60_000, 25, |_| Choice::A);
        let flags = flag_participant(&"p".into(), &a, &ModerationConfig::default());
        assert_eq!(kinds(&flags), [FlagKind::Position]);
    }

    #[test]
    fn control_failures() {
        let mut a = activity(60_000, 8, mixed);
        for (i, j) in a.judgments.iter_mut().enumerate().take(5) {
            j.control = Some(i == 0);
        }
        let flags = flag_participant(&"p".into(), &a, &ModerationConfig::default());
        assert_eq!(kinds(&flags), [FlagKind::Control]);
        assert_eq!(flags[0].sample, 5);
        // exactly half failed: not above the threshold
        for (i, j) in a.judgments.iter_mut().enumerate().take(4) {
            j.control = Some(i % 2 == 0);
        }
        a.judgments[4].control = None;
        assert!(flag_participant(&"p".into(), &a, &ModerationConfig::default()).is_empty());
    }

    #[test]
    fn degenerate_prompts() {
        let mut a = activity(60_000, 10, mixed);
        a.prompts = (0..10)
            .map(|i| if i < 8 { "hi".to_string() } else { format!("a real question {i}") })
            .collect();
        let flags = flag_participant(&"p".into(), &a, &ModerationConfig::default());
        assert_eq!(kinds(&flags), [FlagKind::Degenerate]);
    }

    #[test]
    fn control_scheduling_extremes() {
        let mut rng = stream_rng(9, 0);
        assert!((0..1000).all(|_| !schedule_control(&mut rng, 0.0)));
        assert!((0..1000).all(|_| schedule_control(&mut rng, 1.0)));
        let hits = (0..10_000).filter(|_| schedule_control(&mut rng, 0.05)).count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.05).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn control_pass_rule() {
        let j = Judgment::new(Choice::B, Choice::A, Some(Choice::B));
        assert!(control_passed(&j, Slot::A));
        assert!(!control_passed(&j, Slot::B));
        assert!(control_passed(&Judgment::new(Choice::Tie, Choice::Tie, None), Slot::A));
    }

    #[test]
    fn degrade_is_a_strict_prefix() {
        let text = "Bai, hori egia da: ñ ü é characters survive truncation.";
        let d = degrade_response(text);
        assert!(text.starts_with(&d));
        assert!(d.chars().count() < text.chars().count());
    }
}
