//! Simulation harness: synthetic models behind mock backends, synthetic
//! participants driving the arena through its public API, and a report on
//! how well the arena recovers the planted truth.

pub mod annotator;
pub mod client;
pub mod run;
pub mod schedule;
pub mod spec;

pub use annotator::Behavior;
pub use client::{ArenaClient, ClientError, HttpClient, InProcessClient};
pub use run::{evaluate, open_arena, run_experiment, Driver, ExperimentReport, Outcome};
pub use spec::ExperimentSpec;
