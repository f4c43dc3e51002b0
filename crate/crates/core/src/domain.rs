//! Shared domain types.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DATE_PLACEHOLDER: &str = "{date}";

/// System prompt shared by every competitor. `{date}` is substituted per turn.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful AI assistant taking part in a \
multi-turn conversation. Answer the user's questions thoroughly and accurately, follow up on \
related questions, and reply in the same language the user writes in. Today is {date}.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("registration is missing education or proficiency")]
    MissingDemographics,
    #[error("participant has not attested the minimum age")]
    UnderAge,
    #[error("username {0:?} is already taken")]
    DuplicateUsername(String),
    #[error("username must not be empty")]
    EmptyUsername,
    #[error("template must contain exactly one {{date}} placeholder, found {0}")]
    MissingPlaceholder(usize),
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("top_p {0} outside (0, 1]")]
    TopP(f64),
    #[error("a battle needs two distinct models, got {0} twice")]
    SameModel(String),
    #[error("invalid date {0}-{1}-{2}")]
    InvalidDate(i32, u8, u8),
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque model identifier, unique across the registry.
    ModelId
);
string_id!(
    /// Opaque participant identifier. Never the username.
    ParticipantId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BattleId(pub u64);

impl fmt::Display for BattleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Milliseconds since the Unix epoch, UTC.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const fn from_millis(ms: u64) -> Self {
        Self(ms)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn date(self) -> Date {
        Date::from_days_since_epoch((self.0 / 86_400_000) as i64)
    }
}

/// Proleptic Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self, DomainError> {
        if month == 0 || month > 12 || day == 0 || day > days_in_month(year, month) {
            return Err(DomainError::InvalidDate(year, month, day));
        }
        Ok(Self { year, month, day })
    }

    // Howard Hinnant's civil_from_days.
    pub fn from_days_since_epoch(days: i64) -> Self {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z.rem_euclid(146_097);
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
        let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
        Self { year, month, day }
    }
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        _ => 28,
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// Substitutes the ISO-8601 date for the single `{date}` placeholder.
pub fn render_system_prompt(template: &str, date: Date) -> Result<String, DomainError> {
    let found = template.matches(DATE_PLACEHOLDER).count();
    if found != 1 {
        return Err(DomainError::MissingPlaceholder(found));
    }
    Ok(template.replacen(DATE_PLACEHOLDER, &date.to_string(), 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub system_prompt_template: String,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            system_prompt_template: DEFAULT_SYSTEM_PROMPT.to_string(),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(DomainError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DomainError::TopP(self.top_p));
        }
        render_system_prompt(&self.system_prompt_template, Date::from_days_since_epoch(0))?;
        Ok(())
    }

    pub fn system_prompt(&self, date: Date) -> Result<String, DomainError> {
        render_system_prompt(&self.system_prompt_template, date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: ModelId,
    pub display_name: String,
    pub backend_ref: String,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default = "yes")]
    pub active: bool,
    #[serde(default)]
    pub is_control: bool,
}

fn yes() -> bool {
    true
}

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = DomainError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $(if t.eq_ignore_ascii_case($label) {
                    return Ok($name::$variant);
                })+
                Err(DomainError::UnknownVariant { kind: $kind, value: s.to_string() })
            }
        }
    };
}

labelled_enum!(
    /// Highest completed education level.
    Education, "education" {
        Primary => "primary",
        Secondary => "secondary",
        Vocational => "vocational",
        Bachelor => "bachelor",
        Master => "master",
        Doctorate => "doctorate",
    }
);

labelled_enum!(
    /// Self-reported proficiency in the arena language.
    Proficiency, "proficiency" {
        Basic => "basic",
        Intermediate => "intermediate",
        Advanced => "advanced",
        Native => "native",
    }
);

labelled_enum!(
    /// Judged aspect of a battle.
    Dimension, "dimension" {
        Content => "content",
        Language => "language",
        Global => "global",
    }
);

labelled_enum!(
    /// Benchmark language.
    Language, "language" {
        Eu => "EU",
        En => "EN",
        Es => "ES",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub username: String,
    pub email: String,
    #[serde(default)]
    pub education: Option<Education>,
    #[serde(default)]
    pub proficiency: Option<Proficiency>,
    #[serde(default)]
    pub age_attested: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub username: String,
    pub email: String,
    pub education: Education,
    pub proficiency: Proficiency,
    pub age_attested: bool,
    pub banned: bool,
    pub created_at: Timestamp,
}

/// Checks a registration and builds the participant. `username_taken` is
/// asked about the trimmed username.
pub fn validate_registration(
    req: &RegistrationRequest,
    participant_id: ParticipantId,
    created_at: Timestamp,
    username_taken: impl Fn(&str) -> bool,
) -> Result<Participant, DomainError> {
    let username = req.username.trim();
    if username.is_empty() {
        return Err(DomainError::EmptyUsername);
    }
    let (Some(education), Some(proficiency)) = (req.education, req.proficiency) else {
        return Err(DomainError::MissingDemographics);
    };
    if !req.age_attested {
        return Err(DomainError::UnderAge);
    }
    if username_taken(username) {
        return Err(DomainError::DuplicateUsername(username.to_string()));
    }
    Ok(Participant {
        participant_id,
        username: username.to_string(),
        email: req.email.trim().to_string(),
        education,
        proficiency,
        age_attested: true,
        banned: false,
        created_at,
    })
}

/// Participant-facing position of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
}

impl Slot {
    pub fn other(self) -> Slot {
        match self {
            Slot::A => Slot::B,
            Slot::B => Slot::A,
        }
    }
}

/// Three-way answer to one judgment question, in slot space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Choice {
    A,
    B,
    Tie,
}

impl Choice {
    pub const ALL: [Choice; 3] = [Choice::A, Choice::B, Choice::Tie];

    pub fn slot(self) -> Option<Slot> {
        match self {
            Choice::A => Some(Slot::A),
            Choice::B => Some(Slot::B),
            Choice::Tie => None,
        }
    }

    /// The same preference with the two slots exchanged.
    pub fn swapped(self) -> Choice {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
            Choice::Tie => Choice::Tie,
        }
    }
}

/// Result of a comparison in model space: `WinA` means the record's
/// `model_a` won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    WinA,
    WinB,
    Tie,
}

impl Outcome {
    pub fn swapped(self) -> Outcome {
        match self {
            Outcome::WinA => Outcome::WinB,
            Outcome::WinB => Outcome::WinA,
            Outcome::Tie => Outcome::Tie,
        }
    }

    /// Credit given to `model_a`: 1 for a win, 1/2 for a tie.
    pub fn score_a(self) -> f64 {
        match self {
            Outcome::WinA => 1.0,
            Outcome::WinB => 0.0,
            Outcome::Tie => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user_message: String,
    pub response_a: String,
    pub response_b: String,
}

impl Turn {
    pub fn response(&self, slot: Slot) -> &str {
        match slot {
            Slot::A => &self.response_a,
            Slot::B => &self.response_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BattleStatus {
    Open,
    Judged,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Judgment {
    pub content_choice: Choice,
    pub language_choice: Choice,
    #[serde(default)]
    pub overall_choice: Option<Choice>,
}

impl Judgment {
    pub fn new(content: Choice, language: Choice, overall: Option<Choice>) -> Self {
        Self {
            content_choice: content,
            language_choice: language,
            overall_choice: overall,
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            content_choice: self.content_choice.swapped(),
            language_choice: self.language_choice.swapped(),
            overall_choice: self.overall_choice.map(Choice::swapped),
        }
    }
}

/// One anonymised A/B comparison session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Battle {
    pub battle_id: BattleId,
    pub participant_id: ParticipantId,
    pub slot_a: ModelId,
    pub slot_b: ModelId,
    pub turns: Vec<Turn>,
    pub judgment: Option<Judgment>,
    pub status: BattleStatus,
    pub is_control: bool,
    /// Slot served by the degraded control responder, when `is_control`.
    #[serde(default)]
    pub control_slot: Option<Slot>,
    /// Set when a backend timed out; degraded battles never enter ranking data.
    #[serde(default)]
    pub degraded: bool,
    pub created_at: Timestamp,
    #[serde(default)]
    pub judged_at: Option<Timestamp>,
}

impl Battle {
    pub fn new(
        battle_id: BattleId,
        participant_id: ParticipantId,
        slot_a: ModelId,
        slot_b: ModelId,
        created_at: Timestamp,
    ) -> Result<Self, DomainError> {
        if slot_a == slot_b {
            return Err(DomainError::SameModel(slot_a.0));
        }
        Ok(Self {
            battle_id,
            participant_id,
            slot_a,
            slot_b,
            turns: Vec::new(),
            judgment: None,
            status: BattleStatus::Open,
            is_control: false,
            control_slot: None,
            degraded: false,
            created_at,
            judged_at: None,
        })
    }

    pub fn with_control(mut self, slot: Slot) -> Self {
        self.is_control = true;
        self.control_slot = Some(slot);
        self
    }

    pub fn model_in(&self, slot: Slot) -> &ModelId {
        match slot {
            Slot::A => &self.slot_a,
            Slot::B => &self.slot_b,
        }
    }

    pub fn is_open(&self) -> bool {
        self.status == BattleStatus::Open
    }
}

/// Finalised three-way outcomes for one judged battle, in model space.
///
/// `model_a` is always the lexicographically smaller model id, so the record
/// does not depend on which model was shown in which slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub battle_id: BattleId,
    pub participant_id: ParticipantId,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub outcome_content: Outcome,
    pub outcome_language: Outcome,
    pub outcome_global: Outcome,
    pub education: Education,
    pub proficiency: Proficiency,
    pub timestamp: Timestamp,
}

impl PreferenceRecord {
    pub fn outcome(&self, dimension: Dimension) -> Outcome {
        match dimension {
            Dimension::Content => self.outcome_content,
            Dimension::Language => self.outcome_language,
            Dimension::Global => self.outcome_global,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthEstimate {
    pub model_id: ModelId,
    pub theta: f64,
    pub score: f64,
    pub ci_low_delta: f64,
    pub ci_high_delta: f64,
    pub n_battles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub model_id: ModelId,
    pub benchmark_id: String,
    pub language: Language,
    pub accuracy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn req(username: &str) -> RegistrationRequest {
        RegistrationRequest {
            username: username.into(),
            email: "m@example.org".into(),
            education: Some(Education::Bachelor),
            proficiency: Some(Proficiency::Native),
            age_attested: true,
        }
    }

    #[test]
    fn registration_happy_path() {
        let p = validate_registration(&req("miren"), "p1".into(), Timestamp(5), |_| false).unwrap();
        assert_eq!(p.username, "miren");
        assert_eq!(p.education, Education::Bachelor);
        assert!(!p.banned);
    }

    #[test]
    fn registration_errors() {
        let mut r = req("x");
        r.education = None;
        assert_eq!(
            validate_registration(&r, "p".into(), Timestamp(0), |_| false),
            Err(DomainError::MissingDemographics)
        );
        let mut r = req("y");
        r.age_attested = false;
        assert_eq!(
            validate_registration(&r, "p".into(), Timestamp(0), |_| false),
            Err(DomainError::UnderAge)
        );
        assert_eq!(
            validate_registration(&req("miren"), "p".into(), Timestamp(0), |u| u == "miren"),
            Err(DomainError::DuplicateUsername("miren".into()))
        );
    }

    #[test]
    fn prompt_rendering() {
        let d = Date::new(2025, 3, 1).unwrap();
        assert_eq!(
            render_system_prompt("Today is {date}.", d).unwrap(),
            "Today is 2025-03-01."
        );
        assert_eq!(
            render_system_prompt("no placeholder", d),
            Err(DomainError::MissingPlaceholder(0))
        );
        assert_eq!(
            render_system_prompt("{date} {date}", d),
            Err(DomainError::MissingPlaceholder(2))
        );
        let rendered = render_system_prompt(DEFAULT_SYSTEM_PROMPT, d).unwrap();
        assert_eq!(rendered, DEFAULT_SYSTEM_PROMPT.replace("{date}", "2025-03-01"));
    }

    #[test]
    fn multi_paragraph_prompt_is_byte_identical_outside_placeholder() {
        let template = "Line one,\n\nline two · ünïcödé.\nToday is {date}. Trailing  spaces  ";
        let d = Date::new(2024, 12, 31).unwrap();
        let out = render_system_prompt(template, d).unwrap();
        let (pre, post) = template.split_once("{date}").unwrap();
        assert_eq!(out, format!("{pre}2024-12-31{post}"));
    }

    #[test]
    fn sampling_defaults() {
        let s = SamplingConfig::default();
        assert_eq!(s.temperature, 0.9);
        assert_eq!(s.top_p, 0.95);
        s.validate().unwrap();
        let bad = SamplingConfig { top_p: 0.0, ..s.clone() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dates_from_timestamps() {
        assert_eq!(Timestamp(0).date(), Date::new(1970, 1, 1).unwrap());
        // 2025-03-01T12:00:00Z
        assert_eq!(Timestamp(1_740_830_400_000).date(), Date::new(2025, 3, 1).unwrap());
        assert_eq!(Date::from_days_since_epoch(11_016), Date::new(2000, 2, 29).unwrap());
        assert!(Date::new(2023, 2, 29).is_err());
    }

    #[test]
    fn labels_parse_back() {
        for e in Education::ALL {
            assert_eq!(e.label().parse::<Education>().unwrap(), *e);
        }
        assert_eq!("eu".parse::<Language>().unwrap(), Language::Eu);
        assert!("xx".parse::<Dimension>().is_err());
    }

    #[test]
    fn battle_rejects_identical_slots() {
        assert!(Battle::new(BattleId(1), "p".into(), "m".into(), "m".into(), Timestamp(0)).is_err());
    }
}
