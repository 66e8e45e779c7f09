use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::lifecycle_ops::TransitionExtras;
use super::{ActionEntry, Effects, InstanceSlot, Kernel, KernelError, KernelResult};
use crate::actor::ActorId;
use crate::autonomy::spot_check_selected;
use crate::clock::Millis;
use crate::events::{FramePayload, ReviewTask};
use crate::hitl::{
    default_options, evaluate_gate, ActionDescriptor, Checkpoint, CheckpointStatus, Directive,
    GateDecision, GateDecisionKind, Resolution, ResolutionRequest,
};
use crate::journal::payload::{
    ActionFields, HitlPayload, HitlPhase, Payload, ProgressStatus, WorkProgressPayload,
};
use crate::journal::JournalRecord;
use crate::lifecycle::{EventKind, LifecycleState};

/// What the reporting agent must do next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ActionOutcome {
    /// Carry the action out.
    Proceed { action_id: String, gate: GateDecision },
    /// Carry it out; humans were notified.
    ProceedWithNotify { action_id: String, gate: GateDecision },
    /// Wait for the checkpoint to be resolved.
    Checkpoint {
        action_id: String,
        checkpoint_id: String,
        gate: GateDecision,
    },
    /// Do not carry it out.
    Blocked { action_id: String, gate: GateDecision },
}

impl ActionOutcome {
    pub fn action_id(&self) -> &str {
        match self {
            ActionOutcome::Proceed { action_id, .. }
            | ActionOutcome::ProceedWithNotify { action_id, .. }
            | ActionOutcome::Checkpoint { action_id, .. }
            | ActionOutcome::Blocked { action_id, .. } => action_id,
        }
    }

    pub fn gate(&self) -> &GateDecision {
        match self {
            ActionOutcome::Proceed { gate, .. }
            | ActionOutcome::ProceedWithNotify { gate, .. }
            | ActionOutcome::Checkpoint { gate, .. }
            | ActionOutcome::Blocked { gate, .. } => gate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Executed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveOutcome {
    pub checkpoint: Checkpoint,
    pub state: LifecycleState,
    /// True when this call repeated an earlier identical resolution.
    pub replayed: bool,
}

fn check_descriptor(d: &ActionDescriptor) -> KernelResult<()> {
    if d.action_kind.trim().is_empty() {
        return Err(KernelError::SchemaViolation("action_kind must be non-empty".to_owned()));
    }
    if !(0.0..=1.0).contains(&d.confidence) {
        return Err(KernelError::SchemaViolation(format!(
            "confidence {} outside [0, 1]",
            d.confidence
        )));
    }
    if matches!(&d.action_id, Some(id) if id.trim().is_empty()) {
        return Err(KernelError::SchemaViolation("action_id must be non-empty when given".to_owned()));
    }
    Ok(())
}

impl Kernel {
    /// Gates a planned action and journals the proposal. `RequireApproval`
    /// opens a checkpoint; auto-proceeded actions may be sampled for review.
    pub fn report_action(&self, actor: &ActorId, action: ActionDescriptor) -> KernelResult<ActionOutcome> {
        check_descriptor(&action)?;
        let slot = self.slot(&action.instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let mut s = slot.lock();
            self.propose_locked(&mut fx, &mut s, actor, action, None)
        };
        self.settle(fx);
        result
    }

    /// Opens a checkpoint for an action already gated `RequireApproval`.
    pub fn open_checkpoint(
        &self,
        actor: &ActorId,
        action: ActionDescriptor,
        gate: GateDecision,
    ) -> KernelResult<Checkpoint> {
        check_descriptor(&action)?;
        if gate.kind != GateDecisionKind::RequireApproval {
            return Err(KernelError::IllegalState(format!(
                "checkpoints open only for RequireApproval, got {}",
                gate.kind
            )));
        }
        let slot = self.slot(&action.instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let mut s = slot.lock();
            match s.inst.state {
                LifecycleState::AwaitingHuman => Err(KernelError::DuplicateCheckpoint(s.inst.instance_id.clone())),
                LifecycleState::Active => self.propose_locked(&mut fx, &mut s, actor, action, Some(gate)),
                other => Err(KernelError::IllegalState(format!(
                    "{} is {other}, not Active",
                    s.inst.instance_id
                ))),
            }
        };
        self.settle(fx);
        let outcome = result?;
        match outcome {
            ActionOutcome::Checkpoint { checkpoint_id, .. } => self.checkpoint(&checkpoint_id),
            other => Err(KernelError::IllegalState(format!("no checkpoint opened: {other:?}"))),
        }
    }

    fn propose_locked(
        &self,
        fx: &mut Effects,
        s: &mut InstanceSlot,
        actor: &ActorId,
        mut action: ActionDescriptor,
        forced_gate: Option<GateDecision>,
    ) -> KernelResult<ActionOutcome> {
        self.agent_write_locked(s, actor)?;
        let kind = s.inst.config.agent_kind.clone();
        let policy = self.kind_policy(&kind)?;
        let risk = action.risk_class.unwrap_or(s.inst.config.risk_class_default);
        action.risk_class = Some(risk);
        let gate = forced_gate.unwrap_or_else(|| {
            evaluate_gate(
                &action.action_kind,
                risk,
                action.confidence,
                policy.level,
                &policy.gate,
            )
        });

        let action_id = match action.action_id.clone() {
            Some(id) => {
                if self.actions.lock().contains_key(&id) {
                    return Err(KernelError::SchemaViolation(format!("duplicate action id '{id}'")));
                }
                id
            }
            None => self.next_id("act", &self.ids.action, 6),
        };
        action.action_id = Some(action_id.clone());
        let checkpoint_id = (gate.kind == GateDecisionKind::RequireApproval)
            .then(|| self.next_id("cp", &self.ids.checkpoint, 6));

        let instance_id = s.inst.instance_id.clone();
        let proposal = Payload::WorkProgress(WorkProgressPayload {
            step: action.action_kind.clone(),
            status: ProgressStatus::Proposed,
            detail: action.description.clone(),
            action: Some(ActionFields {
                action_id: action_id.clone(),
                action_kind: Some(action.action_kind.clone()),
                risk_class: Some(risk),
                confidence: Some(action.confidence),
                gate: Some(gate.kind),
                gate_reason: Some(gate.reason.clone()),
                escalated_by_confidence: Some(gate.escalated_by_confidence),
                checkpoint_id: checkpoint_id.clone(),
                modification: None,
            }),
        });
        let proposed = self.append(fx, &instance_id, actor, &proposal)?;
        self.actions.lock().insert(
            action_id.clone(),
            ActionEntry {
                action_id: action_id.clone(),
                instance_id: instance_id.clone(),
                descriptor: action.clone(),
                gate: gate.clone(),
                checkpoint_id: checkpoint_id.clone(),
                executed: false,
                reported_at: proposed.timestamp,
            },
        );

        let outcome = match gate.kind {
            GateDecisionKind::RequireApproval => {
                let cp_id = checkpoint_id.expect("assigned for RequireApproval");
                self.open_checkpoint_locked(fx, s, actor, &action, &gate, &cp_id, policy.checkpoint_timeout_ms)?;
                ActionOutcome::Checkpoint {
                    action_id,
                    checkpoint_id: cp_id,
                    gate,
                }
            }
            GateDecisionKind::Block => {
                tracing::info!(%instance_id, action_kind = %action.action_kind, "action blocked");
                ActionOutcome::Blocked { action_id, gate }
            }
            GateDecisionKind::AutoProceedNotify | GateDecisionKind::AutoProceed => {
                if gate.kind == GateDecisionKind::AutoProceedNotify {
                    self.publish(FramePayload::Notification {
                        instance_id: instance_id.clone(),
                        action_id: action_id.clone(),
                        action_kind: action.action_kind.clone(),
                        risk_class: risk,
                        gate: gate.kind,
                    });
                }
                if spot_check_selected(self.cfg.spot_check_seed, &action_id, policy.spot_check_rate) {
                    let task = ReviewTask {
                        review_id: self.next_id("rev", &self.ids.review, 6),
                        instance_id: instance_id.clone(),
                        agent_kind: kind,
                        action_id: action_id.clone(),
                        action_kind: action.action_kind.clone(),
                        source: proposed.id(),
                        created_at: proposed.timestamp,
                    };
                    self.reviews.lock().push(task.clone());
                    self.publish(FramePayload::Review(task));
                }
                if gate.kind == GateDecisionKind::AutoProceed {
                    ActionOutcome::Proceed { action_id, gate }
                } else {
                    ActionOutcome::ProceedWithNotify { action_id, gate }
                }
            }
        };
        Ok(outcome)
    }

    #[allow(clippy::too_many_arguments)]
    fn open_checkpoint_locked(
        &self,
        fx: &mut Effects,
        s: &mut InstanceSlot,
        actor: &ActorId,
        action: &ActionDescriptor,
        gate: &GateDecision,
        cp_id: &str,
        timeout_ms: Millis,
    ) -> KernelResult<()> {
        if s.pending.is_some() {
            return Err(KernelError::DuplicateCheckpoint(s.inst.instance_id.clone()));
        }
        self.authorize_event(s, actor, EventKind::OpenCheckpoint)?;
        let extras = TransitionExtras {
            checkpoint_id: Some(cp_id.to_owned()),
            ..TransitionExtras::default()
        };
        let reason = format!("approval needed for {}", action.action_kind);
        let transition = self.transition_locked(fx, s, EventKind::OpenCheckpoint, actor, &reason, extras)?;
        let risk = action.risk_class.unwrap_or(s.inst.config.risk_class_default);
        let question = format!(
            "Approve {} ({} risk, confidence {:.2}): {}",
            action.action_kind, risk, action.confidence, action.description
        );
        let cp = Checkpoint {
            checkpoint_id: cp_id.to_owned(),
            instance_id: s.inst.instance_id.clone(),
            action: action.clone(),
            gate: gate.clone(),
            question: question.clone(),
            options: default_options(),
            opened_at: transition.timestamp,
            timeout_ms,
            status: CheckpointStatus::Pending,
            resolution: None,
        };
        let payload = Payload::Hitl(HitlPayload {
            phase: HitlPhase::Open,
            checkpoint_id: cp_id.to_owned(),
            question,
            options: cp.options.clone(),
            action_id: action.action_id.clone(),
            action_kind: Some(action.action_kind.clone()),
            risk_class: Some(risk),
            confidence: Some(action.confidence),
            timeout_ms: Some(timeout_ms),
            resolution: None,
            reason: Some(gate.reason.clone()),
        });
        let instance_id = s.inst.instance_id.clone();
        self.append(fx, &instance_id, actor, &payload)?;
        self.checkpoints
            .write()
            .insert(cp_id.to_owned(), Arc::new(Mutex::new(cp)));
        s.pending = Some(cp_id.to_owned());
        Ok(())
    }

    /// Journals that the agent carried out (or failed) an action. Refused
    /// unless the action's gate allows it.
    pub fn report_execution(
        &self,
        instance_id: &str,
        actor: &ActorId,
        action_id: &str,
        outcome: ExecutionOutcome,
        detail: &str,
    ) -> KernelResult<JournalRecord> {
        let slot = self.slot(instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let s = slot.lock();
            self.execute_locked(&mut fx, &s, actor, action_id, outcome, detail)
        };
        self.settle(fx);
        result
    }

    fn execute_locked(
        &self,
        fx: &mut Effects,
        s: &InstanceSlot,
        actor: &ActorId,
        action_id: &str,
        outcome: ExecutionOutcome,
        detail: &str,
    ) -> KernelResult<JournalRecord> {
        self.agent_write_locked(s, actor)?;
        let entry = self
            .action(action_id)
            .filter(|a| a.instance_id == s.inst.instance_id)
            .ok_or_else(|| KernelError::UnknownAction(action_id.to_owned()))?;
        if entry.executed {
            return Err(KernelError::ActionNotPermitted(format!("{action_id} was already carried out")));
        }
        let mut modification = None;
        match entry.gate.kind {
            GateDecisionKind::Block => {
                return Err(KernelError::ActionNotPermitted(format!("{action_id} is blocked")))
            }
            GateDecisionKind::RequireApproval => {
                let cp_id = entry.checkpoint_id.clone().unwrap_or_default();
                let cp = self.checkpoint(&cp_id)?;
                match (&cp.status, &cp.resolution) {
                    (CheckpointStatus::Resolved, Some(res)) if res.directive.permits_execution() => {
                        modification = res.modification.clone();
                    }
                    _ => {
                        return Err(KernelError::ActionNotPermitted(format!(
                            "{action_id} has no approving resolution"
                        )))
                    }
                }
            }
            GateDecisionKind::AutoProceed | GateDecisionKind::AutoProceedNotify => {}
        }
        let payload = Payload::WorkProgress(WorkProgressPayload {
            step: entry.descriptor.action_kind.clone(),
            status: match outcome {
                ExecutionOutcome::Executed => ProgressStatus::Executed,
                ExecutionOutcome::Error => ProgressStatus::Error,
            },
            detail: detail.to_owned(),
            action: Some(ActionFields {
                action_id: action_id.to_owned(),
                checkpoint_id: entry.checkpoint_id.clone(),
                modification,
                ..ActionFields::default()
            }),
        });
        let record = self.append(fx, &s.inst.instance_id, actor, &payload)?;
        if let Some(a) = self.actions.lock().get_mut(action_id) {
            a.executed = true;
        }
        Ok(record)
    }

    /// Applies a human directive to a pending checkpoint. Repeating the same
    /// directive by the same resolver returns the original outcome.
    pub fn resolve_checkpoint(
        &self,
        checkpoint_id: &str,
        req: ResolutionRequest,
        resolver: &ActorId,
    ) -> KernelResult<ResolveOutcome> {
        let cp_handle = self
            .checkpoints
            .read()
            .get(checkpoint_id)
            .cloned()
            .ok_or_else(|| KernelError::UnknownCheckpoint(checkpoint_id.to_owned()))?;
        let instance_id = cp_handle.lock().instance_id.clone();

        let role = self.require_actor(resolver)?.role;
        if !role.can_resolve() {
            return Err(KernelError::Unauthorized(format!("{role} may not resolve checkpoints")));
        }
        let event = match req.directive {
            Directive::Proceed | Directive::ProceedWithModification => EventKind::ResolveProceed,
            Directive::DenyAndReplan => EventKind::ResolveDeny,
            Directive::Abort => EventKind::Abort,
        };
        if !crate::lifecycle::role_may_raise(role, event) {
            return Err(KernelError::Unauthorized(format!("{role} may not raise {event}")));
        }
        match (&req.directive, &req.modification) {
            (Directive::ProceedWithModification, None) => {
                return Err(KernelError::SchemaViolation(
                    "proceed_with_modification needs a modification map".to_owned(),
                ))
            }
            (Directive::ProceedWithModification, Some(m)) if m.is_empty() => {
                return Err(KernelError::SchemaViolation("modification map is empty".to_owned()))
            }
            (Directive::ProceedWithModification, _) | (_, None) => {}
            (_, Some(_)) => {
                return Err(KernelError::SchemaViolation(format!(
                    "{} does not take a modification",
                    req.directive
                )))
            }
        }

        let slot = self.slot(&instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let mut s = slot.lock();
            let cp = cp_handle.lock();
            match cp.status {
                CheckpointStatus::Resolved => {
                    let original = cp.resolution.clone().expect("resolved checkpoints carry a resolution");
                    if original.resolver == *resolver && original.directive == req.directive {
                        Ok(ResolveOutcome {
                            checkpoint: cp.clone(),
                            state: s.inst.state,
                            replayed: true,
                        })
                    } else {
                        Err(KernelError::AlreadyResolved {
                            checkpoint_id: checkpoint_id.to_owned(),
                            resolution: Box::new(original),
                        })
                    }
                }
                CheckpointStatus::Expired => Err(KernelError::CheckpointExpired(checkpoint_id.to_owned())),
                CheckpointStatus::Pending => {
                    drop(cp);
                    self.resolve_locked(&mut fx, &mut s, &cp_handle, req, resolver, event)
                }
            }
        };
        self.settle(fx);
        result
    }

    fn resolve_locked(
        &self,
        fx: &mut Effects,
        s: &mut InstanceSlot,
        cp_handle: &Arc<Mutex<Checkpoint>>,
        req: ResolutionRequest,
        resolver: &ActorId,
        event: EventKind,
    ) -> KernelResult<ResolveOutcome> {
        if s.inst.state != LifecycleState::AwaitingHuman {
            return Err(KernelError::IllegalState(format!(
                "{} is {}, not AwaitingHuman",
                s.inst.instance_id, s.inst.state
            )));
        }
        let mut cp = cp_handle.lock();
        let resolution = Resolution {
            directive: req.directive,
            modification: req.modification,
            note: req.note,
            resolver: resolver.clone(),
            resolved_at: self.now(),
        };
        let payload = Payload::Hitl(HitlPayload {
            phase: HitlPhase::Resolve,
            checkpoint_id: cp.checkpoint_id.clone(),
            question: cp.question.clone(),
            options: Vec::new(),
            action_id: cp.action.action_id.clone(),
            action_kind: Some(cp.action.action_kind.clone()),
            risk_class: cp.action.risk_class,
            confidence: Some(cp.action.confidence),
            timeout_ms: None,
            resolution: Some(resolution.clone()),
            reason: None,
        });
        let instance_id = s.inst.instance_id.clone();
        self.append(fx, &instance_id, resolver, &payload)?;
        cp.status = CheckpointStatus::Resolved;
        cp.resolution = Some(resolution.clone());
        s.pending = None;

        let reason = if resolution.note.trim().is_empty() {
            format!("checkpoint {} resolved: {}", cp.checkpoint_id, resolution.directive)
        } else {
            resolution.note.clone()
        };
        let extras = TransitionExtras {
            checkpoint_id: Some(cp.checkpoint_id.clone()),
            ..TransitionExtras::default()
        };
        self.transition_locked(fx, s, event, resolver, &reason, extras)?;
        Ok(ResolveOutcome {
            checkpoint: cp.clone(),
            state: s.inst.state,
            replayed: false,
        })
    }

    /// Expires every pending checkpoint due at `now`, suspends its instance
    /// and pushes an escalation frame. Returns (checkpoint id, frame seq).
    pub fn expire_due_checkpoints(&self, now: Millis) -> Vec<(String, u64)> {
        let handles: Vec<Arc<Mutex<Checkpoint>>> = self.checkpoints.read().values().cloned().collect();
        let mut due: Vec<(String, String)> = handles
            .iter()
            .filter_map(|h| {
                let c = h.lock();
                c.is_due(now).then(|| (c.checkpoint_id.clone(), c.instance_id.clone()))
            })
            .collect();
        due.sort();

        let sentinel = ActorId::sentinel();
        let mut out = Vec::new();
        for (cp_id, instance_id) in due {
            let Ok(slot) = self.slot(&instance_id) else { continue };
            let mut fx = Effects::default();
            let expired = {
                let mut s = slot.lock();
                self.expire_one_locked(&mut fx, &mut s, &cp_id, now, &sentinel)
            };
            self.settle(fx);
            match expired {
                Ok(Some(seq)) => out.push((cp_id, seq)),
                Ok(None) => {}
                Err(e) => tracing::warn!(%cp_id, error = %e, "checkpoint expiry failed"),
            }
        }
        out
    }

    fn expire_one_locked(
        &self,
        fx: &mut Effects,
        s: &mut InstanceSlot,
        cp_id: &str,
        now: Millis,
        sentinel: &ActorId,
    ) -> KernelResult<Option<u64>> {
        let handle = self.checkpoints.read().get(cp_id).cloned();
        let Some(handle) = handle else { return Ok(None) };
        let mut cp = handle.lock();
        // Lost the race to a resolver.
        if !cp.is_due(now) || s.pending.as_deref() != Some(cp_id) {
            return Ok(None);
        }
        let reason = format!("no resolution within {} ms", cp.timeout_ms);
        let payload = Payload::Hitl(HitlPayload {
            phase: HitlPhase::Expire,
            checkpoint_id: cp_id.to_owned(),
            question: cp.question.clone(),
            options: Vec::new(),
            action_id: cp.action.action_id.clone(),
            action_kind: Some(cp.action.action_kind.clone()),
            risk_class: cp.action.risk_class,
            confidence: None,
            timeout_ms: Some(cp.timeout_ms),
            resolution: None,
            reason: Some(reason.clone()),
        });
        let instance_id = s.inst.instance_id.clone();
        self.append(fx, &instance_id, sentinel, &payload)?;
        cp.status = CheckpointStatus::Expired;
        s.pending = None;
        drop(cp);
        let extras = TransitionExtras {
            checkpoint_id: Some(cp_id.to_owned()),
            ..TransitionExtras::default()
        };
        self.transition_locked(fx, s, EventKind::CheckpointTimeout, sentinel, &reason, extras)?;
        let seq = self.publish(FramePayload::Escalation {
            reason: format!("checkpoint {cp_id} timed out; {instance_id} suspended"),
            agent_kind: Some(s.inst.config.agent_kind.clone()),
            instance_id: Some(instance_id),
            checkpoint_id: Some(cp_id.to_owned()),
            signal_id: None,
        });
        Ok(Some(seq))
    }
}
