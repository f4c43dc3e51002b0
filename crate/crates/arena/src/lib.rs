//! Arena service: configuration, backends, event-sourced storage, the HTTP
//! API and the simulation harness that drives it.

pub mod aggregate;
pub mod backend;
pub mod clock;
pub mod config;
pub mod events;
pub mod export;
pub mod http;
pub mod io;
pub mod report;
pub mod service;
pub mod state;
pub mod sim;
