//! Agent instance lifecycle: states, events, the normative transition table and
//! the authority table that says which roles may raise which events.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::actor::{ActorId, Role};
use crate::autonomy::AutonomyLevel;
use crate::clock::Millis;
use crate::hitl::RiskClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LifecycleState {
    Initiated,
    Active,
    AwaitingHuman,
    Suspended,
    Aborted,
    Finished,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 6] = [
        LifecycleState::Initiated,
        LifecycleState::Active,
        LifecycleState::AwaitingHuman,
        LifecycleState::Suspended,
        LifecycleState::Aborted,
        LifecycleState::Finished,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, LifecycleState::Aborted | LifecycleState::Finished)
    }

    /// Live instances are the ones a fallback suspends.
    pub fn is_live(self) -> bool {
        matches!(self, LifecycleState::Active | LifecycleState::AwaitingHuman)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Initiated => "Initiated",
            LifecycleState::Active => "Active",
            LifecycleState::AwaitingHuman => "AwaitingHuman",
            LifecycleState::Suspended => "Suspended",
            LifecycleState::Aborted => "Aborted",
            LifecycleState::Finished => "Finished",
        }
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Launch,
    OpenCheckpoint,
    ResolveProceed,
    ResolveDeny,
    CheckpointTimeout,
    Suspend,
    Resume,
    Abort,
    Finish,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::Launch,
        EventKind::OpenCheckpoint,
        EventKind::ResolveProceed,
        EventKind::ResolveDeny,
        EventKind::CheckpointTimeout,
        EventKind::Suspend,
        EventKind::Resume,
        EventKind::Abort,
        EventKind::Finish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Launch => "Launch",
            EventKind::OpenCheckpoint => "OpenCheckpoint",
            EventKind::ResolveProceed => "ResolveProceed",
            EventKind::ResolveDeny => "ResolveDeny",
            EventKind::CheckpointTimeout => "CheckpointTimeout",
            EventKind::Suspend => "Suspend",
            EventKind::Resume => "Resume",
            EventKind::Abort => "Abort",
            EventKind::Finish => "Finish",
        }
    }

    /// Abort and Suspend must say why.
    pub fn requires_reason(self) -> bool {
        matches!(self, EventKind::Abort | EventKind::Suspend)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub kind: EventKind,
    pub actor: ActorId,
    #[serde(default)]
    pub reason: String,
}

impl LifecycleEvent {
    pub fn new(kind: EventKind, actor: impl Into<ActorId>, reason: impl Into<String>) -> Self {
        Self {
            kind,
            actor: actor.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitionCheck {
    Allowed(LifecycleState),
    Denied(String),
}

impl TransitionCheck {
    pub fn target(&self) -> Option<LifecycleState> {
        match self {
            TransitionCheck::Allowed(s) => Some(*s),
            TransitionCheck::Denied(_) => None,
        }
    }
}

/// Pure lookup in the normative transition table.
pub fn validate_transition(state: LifecycleState, event: EventKind) -> TransitionCheck {
    use EventKind as E;
    use LifecycleState as S;

    if state.is_terminal() {
        return TransitionCheck::Denied("terminal state".to_owned());
    }
    let target = match (state, event) {
        (S::Initiated, E::Launch) => S::Active,
        (S::Initiated, E::Abort) => S::Aborted,

        (S::Active, E::OpenCheckpoint) => S::AwaitingHuman,
        (S::Active, E::Suspend) => S::Suspended,
        (S::Active, E::Abort) => S::Aborted,
        (S::Active, E::Finish) => S::Finished,

        (S::AwaitingHuman, E::ResolveProceed) => S::Active,
        (S::AwaitingHuman, E::ResolveDeny) => S::Active,
        (S::AwaitingHuman, E::CheckpointTimeout) => S::Suspended,
        (S::AwaitingHuman, E::Abort) => S::Aborted,
        (S::AwaitingHuman, E::Suspend) => S::Suspended,

        (S::Suspended, E::Resume) => S::Active,
        (S::Suspended, E::Abort) => S::Aborted,

        (s, e) => return TransitionCheck::Denied(format!("{e} not permitted from {s}")),
    };
    TransitionCheck::Allowed(target)
}

/// Whether a role may raise an event kind at all. Ownership of the instance is
/// checked separately for agent actors.
pub fn role_may_raise(role: Role, event: EventKind) -> bool {
    use EventKind as E;
    match event {
        E::Launch => matches!(role, Role::Agent | Role::Operator | Role::Admin),
        E::OpenCheckpoint | E::Finish => role == Role::Agent,
        E::ResolveProceed | E::ResolveDeny => role.can_resolve(),
        E::CheckpointTimeout => role == Role::Sentinel,
        E::Abort => matches!(role, Role::Operator | Role::Admin | Role::Sentinel),
        E::Suspend => role == Role::Sentinel || role.is_human(),
        E::Resume => matches!(role, Role::Operator | Role::Admin),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_kind: String,
    pub scope: String,
    #[serde(default)]
    pub context: BTreeMap<String, String>,
    pub objectives: Vec<String>,
    #[serde(default)]
    pub data_sources: Vec<String>,
    pub risk_class_default: RiskClass,
    /// The agent actor that runs this instance and reports its work.
    pub owner: ActorId,
}

impl AgentConfig {
    /// Local invariants only; kind registration and owner role are checked by the kernel.
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut failures = Vec::new();
        if self.scope.trim().is_empty() {
            failures.push("scope must be non-empty".to_owned());
        }
        if self.objectives.is_empty() || self.objectives.iter().all(|o| o.trim().is_empty()) {
            failures.push("objectives must be non-empty".to_owned());
        }
        if self.agent_kind.trim().is_empty() {
            failures.push("agent_kind must be non-empty".to_owned());
        }
        failures
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInstance {
    pub instance_id: String,
    pub config: AgentConfig,
    pub state: LifecycleState,
    pub autonomy_level: AutonomyLevel,
    pub created_at: Millis,
    pub updated_at: Millis,
    pub output_summary: Option<String>,
}
