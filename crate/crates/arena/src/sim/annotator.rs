//! Synthetic participants.
//!
//! Honest annotators read the quality marker each mock answer carries and
//! judge by the Bradley-Terry probability of the two strengths. An answer
//! without a marker is a degraded control answer and loses to anything.

use arena_core::domain::{Choice, Judgment, Turn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::quality_marker;
use crate::sim::spec::AnnotatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Behavior {
    Honest,
    /// Always answers A.
    Position,
    /// Random answers in quick succession.
    Rate,
    /// Prefers the shorter answer, which is what fails control battles.
    Control,
}

impl Behavior {
    pub fn is_spammer(self) -> bool {
        self != Behavior::Honest
    }
}

/// P(first beats second) under Bradley-Terry.
pub fn bt_probability(theta_a: f64, theta_b: f64) -> f64 {
    if theta_a == theta_b {
        return 0.5;
    }
    1.0 / (1.0 + (theta_b - theta_a).exp())
}

fn strength(text: &str) -> f64 {
    quality_marker(text).unwrap_or(f64::NEG_INFINITY)
}

/// Judgment of an honest annotator given the two strengths.
pub fn honest_judgment<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &AnnotatorConfig,
    theta_a: f64,
    theta_b: f64,
) -> Judgment {
    if rng.gen_bool(cfg.tie_rate) {
        return Judgment::new(Choice::Tie, Choice::Tie, None);
    }
    let mut a_wins = rng.gen_bool(bt_probability(theta_a, theta_b).clamp(0.0, 1.0));
    if rng.gen_bool(cfg.noise) {
        a_wins = !a_wins;
    }
    let (winner, loser) = if a_wins {
        (Choice::A, Choice::B)
    } else {
        (Choice::B, Choice::A)
    };
    if rng.gen_bool(cfg.contradiction_rate) {
        Judgment::new(winner, loser, Some(winner))
    } else {
        Judgment::new(winner, winner, None)
    }
}

pub fn judge<R: Rng + ?Sized>(
    rng: &mut R,
    behavior: Behavior,
    cfg: &AnnotatorConfig,
    last_turn: &Turn,
) -> Judgment {
    match behavior {
        Behavior::Honest => honest_judgment(
            rng,
            cfg,
            strength(&last_turn.response_a),
            strength(&last_turn.response_b),
        ),
        Behavior::Position => Judgment::new(Choice::A, Choice::A, None),
        Behavior::Rate => {
            let c = Choice::ALL[rng.gen_range(0..3)];
            Judgment::new(c, c, None)
        }
        Behavior::Control => {
            let a = last_turn.response_a.chars().count();
            let b = last_turn.response_b.chars().count();
            let c = if a <= b { Choice::A } else { Choice::B };
            Judgment::new(c, c, None)
        }
    }
}

const PROMPT_WORDS: &[&str] = &[
    "zer", "nola", "noiz", "non", "zergatik", "azaldu", "idatzi", "laburtu", "itzuli", "olerki",
    "ipuin", "errezeta", "historia", "mendi", "itsaso", "euskara", "hiztegi", "gramatika",
    "matematika", "zientzia", "kirola", "musika", "bidaia", "lana", "familia", "etxea",
];

/// A short made-up prompt.
pub fn prompt<R: Rng + ?Sized>(rng: &mut R) -> String {
    let n = rng.gen_range(4..12);
    let words: Vec<&str> = (0..n)
        .map(|_| PROMPT_WORDS[rng.gen_range(0..PROMPT_WORDS.len())])
        .collect();
    format!("{}?", words.join(" "))
}
