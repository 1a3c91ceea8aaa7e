//! Deterministic, event-sourced engine for a hybrid cooperative: token-weighted
//! governance, a code-deferent legal foundation, jurisdiction modules,
//! oracles and workstreams, plus a scenario runner and requirement metrics.
//!
//! Every state change goes through [`Engine::append`], which logs the event in
//! a SHA-256 hash chain. Replaying the log reproduces the state exactly.

pub mod action;
pub mod archetypes;
pub mod canonical;
pub mod engine;
pub mod error;
pub mod event;
pub mod foundation;
pub mod governance;
pub mod jurisdiction;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod state;
pub mod token;
pub mod types;
pub mod workstream;

pub use canonical::Digest;
pub use engine::{replay, verify_log, Engine, EventRecord, LogVerdict};
pub use error::{EngineError, EngineResult};
pub use event::Event;
pub use report::Report;
pub use runner::run;
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use state::EngineState;
