use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::autonomy::{AutonomyLevel, EligibilityReport};
use crate::hitl::Resolution;
use crate::journal::JournalError;
use crate::lifecycle::{EventKind, LifecycleState};
use crate::sentinel::SentinelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("unknown agent kind '{0}'")]
    UnknownAgentKind(String),
    #[error("agent kind '{0}' is already registered")]
    DuplicateKind(String),
    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("unknown actor '{0}'")]
    UnknownActor(String),
    #[error("unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("{event} not permitted from {from}: {reason}")]
    IllegalTransition {
        from: LifecycleState,
        event: EventKind,
        reason: String,
    },
    #[error("illegal state: {0}")]
    IllegalState(String),
    #[error("launch of '{agent_kind}' blocked while anomaly {signal_id} is open")]
    LaunchBlocked { agent_kind: String, signal_id: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("instance '{0}' already has a pending checkpoint")]
    DuplicateCheckpoint(String),
    #[error("unknown checkpoint '{0}'")]
    UnknownCheckpoint(String),
    #[error("checkpoint '{checkpoint_id}' already resolved")]
    AlreadyResolved {
        checkpoint_id: String,
        resolution: Box<Resolution>,
    },
    #[error("checkpoint '{0}' expired")]
    CheckpointExpired(String),
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("action not permitted: {0}")]
    ActionNotPermitted(String),
    #[error("not eligible for promotion: {}", .0.shortfalls.join("; "))]
    NotEligible(Box<EligibilityReport>),
    #[error("autonomy changes move one level at a time ({from} -> {to})")]
    SkippedLevel { from: AutonomyLevel, to: AutonomyLevel },
    #[error("unknown autonomy change '{0}'")]
    UnknownChange(String),
    #[error("autonomy change '{0}' is not pending")]
    ChangeNotPending(String),
    #[error("unknown anomaly signal '{0}'")]
    UnknownSignal(String),
    #[error("anomaly signal '{0}' already handled")]
    AlreadyHandled(String),
    #[error(transparent)]
    Sentinel(#[from] SentinelError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl KernelError {
    pub fn is_storage_failure(&self) -> bool {
        matches!(self, KernelError::Journal(JournalError::StorageFailure(_)))
    }
}
