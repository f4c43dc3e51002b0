//! Core of a pairwise model-evaluation arena.
//!
//! Everything in this crate is a pure function of its inputs: the domain
//! types, the two-dimension judgment protocol, Bradley–Terry fitting with
//! bootstrap intervals, pair matrices, rank correlation, benchmark analytics
//! and the moderation heuristics. IO, persistence, HTTP and the simulation
//! harness live in the `arena` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analytics;
pub mod domain;
pub mod moderation;
pub mod pairing;
pub mod preference;
pub mod ranking;
pub mod rng;
pub mod stats;

pub use domain::{
    Battle, BattleId, BattleStatus, BenchmarkScore, Choice, Date, Dimension, Education, Judgment,
    Language, ModelId, ModelProfile, Outcome, Participant, ParticipantId, PreferenceRecord,
    Proficiency, RegistrationRequest, SamplingConfig, Slot, StrengthEstimate, Timestamp, Turn,
};
