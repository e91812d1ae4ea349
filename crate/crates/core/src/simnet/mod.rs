//! Deterministic discrete-event simulation of one victim node, an honest
//! population and an optional attacker.
//!
//! Time is integer nanoseconds of simulated time. A run is a pure function
//! of its [`ScenarioConfig`]: every random draw comes from streams derived
//! from `seed`, and the event queue breaks ties by insertion order.

pub mod churn;
pub mod config;
pub mod queue;
mod sim;
pub mod trace;

pub use churn::{sample_connection_duration, ChurnModel, LongTail};
pub use config::{
    AttackSpec, GethVariant, HonestBehaviour, LatencyModel, ScenarioConfig, Timers, TraceDetail,
    PRESET_NAMES,
};
pub use sim::{run_scenario, run_scenario_with, PoolCache};
pub use trace::{EventKind, MessageKind, Outcome, OutcomeRecord, SimTrace, TraceEvent};
