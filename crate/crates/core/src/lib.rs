//! Governance kernel for AI-agent work sessions.
//!
//! Agent instances move through a lifecycle state machine, every change is
//! written to a per-instance hash-chained journal, risky actions stop at human
//! checkpoints, and autonomy per agent kind only rises with journal evidence
//! plus a human approval. A sentinel watches journal-derived rates and
//! suspends a kind when they drift.

pub mod actor;
pub mod analytics;
pub mod audit;
pub mod autonomy;
pub mod clock;
pub mod events;
pub mod hitl;
pub mod journal;
pub mod kernel;
pub mod lifecycle;
pub mod sentinel;

pub use actor::{Actor, ActorId, Role};
pub use autonomy::{AgentKindPolicy, AutonomyLevel, EligibilityReport, PromotionCriteria};
pub use clock::{Clock, ManualClock, Millis, SystemClock};
pub use hitl::{ActionDescriptor, Checkpoint, Directive, GateDecision, GateDecisionKind, RiskClass};
pub use journal::{JournalFilter, JournalRecord, JournalStore, RecordKind};
pub use kernel::{Kernel, KernelConfig, KernelError};
pub use lifecycle::{AgentConfig, AgentInstance, EventKind, LifecycleEvent, LifecycleState};
