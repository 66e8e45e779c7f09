//! Scenario harness for the agentgov kernel.
//!
//! Scripted agents run against an in-process kernel on a virtual clock, one
//! at a time or as seeded fleets, with optional fault injection and simulated
//! human resolvers. Everything goes through the kernel's public operations,
//! and the same seed always yields the same journal bytes.

pub mod drill;
pub mod env;
pub mod fault;
pub mod fleet;
pub mod resolver;
pub mod runner;
pub mod script;

pub use env::HarnessEnv;
pub use fault::{inject_fault, Fault, FaultError, FaultSpec};
pub use fleet::{fleet_script, run_fleet, FleetResult, FleetSpec, KindSummary, ScriptMix};
pub use resolver::AutoResolver;
pub use runner::{run_scenario, AgentRun, HarnessError, RunMetrics, ScenarioOutcome};
pub use script::{ScenarioScript, Step};
