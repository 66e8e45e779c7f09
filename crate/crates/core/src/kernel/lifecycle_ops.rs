use std::sync::Arc;

use parking_lot::Mutex;

use super::{Effects, InstanceSlot, Kernel, KernelError, KernelResult, KindSlot};
use crate::actor::{ActorId, Role};
use crate::autonomy::{AgentKindPolicy, AutonomyChangeRecord, AutonomyPhase};
use crate::hitl::CheckpointStatus;
use crate::journal::kind_stream;
use crate::journal::payload::{
    DecisionPayload, HitlPayload, HitlPhase, Payload, ProgressStatus, StateTransitionPayload,
    WorkProgressPayload,
};
use crate::journal::JournalRecord;
use crate::lifecycle::{
    role_may_raise, validate_transition, AgentConfig, AgentInstance, EventKind, LifecycleEvent,
    LifecycleState, TransitionCheck,
};

fn valid_kind_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

/// Extra fields for a transition record.
#[derive(Default)]
pub(crate) struct TransitionExtras {
    pub checkpoint_id: Option<String>,
    pub signal_id: Option<String>,
    pub output_summary: Option<String>,
}

impl Kernel {
    /// Registers an agent kind at its initial level. Admin only.
    pub fn register_kind(&self, policy: AgentKindPolicy, actor: &ActorId) -> KernelResult<()> {
        let who = self.require_actor(actor)?;
        if who.role != Role::Admin {
            return Err(KernelError::Unauthorized(format!(
                "{} may not register agent kinds",
                who.role
            )));
        }
        let mut failures = policy.criteria.invariant_failures();
        if !valid_kind_name(&policy.name) {
            failures.push(format!("bad kind name '{}'", policy.name));
        }
        if !(0.0..=1.0).contains(&policy.spot_check_rate) {
            failures.push("spot_check_rate must be within [0, 1]".to_owned());
        }
        if !(0.0..=1.0).contains(&policy.gate.confidence_threshold) {
            failures.push("confidence_threshold must be within [0, 1]".to_owned());
        }
        if policy.checkpoint_timeout_ms == 0 {
            failures.push("checkpoint_timeout_ms must be positive".to_owned());
        }
        if !failures.is_empty() {
            return Err(KernelError::InvalidConfig(failures));
        }

        let mut kinds = self.kinds.write();
        if kinds.contains_key(&policy.name) {
            return Err(KernelError::DuplicateKind(policy.name));
        }
        let stream = kind_stream(&policy.name);
        self.journal.open_stream(&stream);
        let mut fx = Effects::default();
        let record = AutonomyChangeRecord {
            phase: AutonomyPhase::Registered,
            change_id: format!("reg-{}", policy.name),
            agent_kind: policy.name.clone(),
            from_level: None,
            to_level: policy.level,
            evidence: None,
            requested_by: actor.clone(),
            approved_by: None,
            reason: "kind registered".to_owned(),
            timestamp: self.now(),
        };
        self.append(&mut fx, &stream, actor, &Payload::Autonomy(record))?;
        kinds.insert(
            policy.name.clone(),
            Arc::new(KindSlot {
                policy: parking_lot::RwLock::new(policy),
                change_lock: Mutex::new(()),
            }),
        );
        Ok(())
    }

    pub fn create_instance(&self, config: AgentConfig, actor: &ActorId) -> KernelResult<AgentInstance> {
        let who = self.require_actor(actor)?;
        if !matches!(who.role, Role::Operator | Role::Admin) {
            return Err(KernelError::Unauthorized(format!(
                "{} may not create instances",
                who.role
            )));
        }
        let mut failures = config.invariant_failures();
        if !failures.is_empty() {
            return Err(KernelError::InvalidConfig(failures));
        }
        let level = self.kind_level(&config.agent_kind)?;
        if self.role_of(&config.owner) != Some(Role::Agent) {
            failures.push(format!("owner '{}' is not a registered agent actor", config.owner));
            return Err(KernelError::InvalidConfig(failures));
        }

        let instance_id = self.next_id("inst", &self.ids.instance, 6);
        self.journal.open_stream(&instance_id);
        let now = self.now();
        let inst = AgentInstance {
            instance_id: instance_id.clone(),
            config: config.clone(),
            state: LifecycleState::Initiated,
            autonomy_level: level,
            created_at: now,
            updated_at: now,
            output_summary: None,
        };
        let payload = Payload::StateTransition(StateTransitionPayload {
            event: None,
            from: None,
            to: LifecycleState::Initiated,
            reason: "created".to_owned(),
            agent_kind: Some(config.agent_kind.clone()),
            autonomy_level: Some(level),
            config: Some(config.clone()),
            output_summary: None,
            checkpoint_id: None,
            signal_id: None,
        });

        // Register the slot before appending so the record's frame never
        // precedes a readable instance.
        let slot = Arc::new(Mutex::new(InstanceSlot {
            inst: inst.clone(),
            pending: None,
        }));
        let mut guard = slot.lock();
        self.instances.write().insert(instance_id.clone(), slot.clone());
        self.instance_kind
            .write()
            .insert(instance_id.clone(), config.agent_kind.clone());
        self.instance_order.write().push(instance_id.clone());

        let mut fx = Effects::default();
        let record = self.append(&mut fx, &instance_id, actor, &payload);
        if let Err(e) = record {
            drop(guard);
            self.instances.write().remove(&instance_id);
            self.instance_kind.write().remove(&instance_id);
            self.instance_order.write().retain(|i| *i != instance_id);
            return Err(e);
        }
        guard.inst.updated_at = now;
        let out = guard.inst.clone();
        drop(guard);
        tracing::debug!(%instance_id, kind = %config.agent_kind, "instance created");
        self.settle(fx);
        Ok(out)
    }

    /// Checks role and, for agents, ownership of the instance.
    pub(crate) fn authorize_event(
        &self,
        slot: &InstanceSlot,
        actor: &ActorId,
        event: EventKind,
    ) -> KernelResult<Role> {
        let role = self.require_actor(actor)?.role;
        if !role_may_raise(role, event) {
            return Err(KernelError::Unauthorized(format!("{role} may not raise {event}")));
        }
        if role == Role::Agent && slot.inst.config.owner != *actor {
            return Err(KernelError::Unauthorized(format!(
                "{actor} does not own {}",
                slot.inst.instance_id
            )));
        }
        Ok(role)
    }

    /// Validates and journals one transition on a locked instance.
    pub(crate) fn transition_locked(
        &self,
        fx: &mut Effects,
        slot: &mut InstanceSlot,
        event: EventKind,
        actor: &ActorId,
        reason: &str,
        extras: TransitionExtras,
    ) -> KernelResult<JournalRecord> {
        let from = slot.inst.state;
        let to = match validate_transition(from, event) {
            TransitionCheck::Allowed(to) => to,
            TransitionCheck::Denied(reason) => {
                return Err(KernelError::IllegalTransition { from, event, reason })
            }
        };
        let payload = Payload::StateTransition(StateTransitionPayload {
            event: Some(event),
            from: Some(from),
            to,
            reason: reason.to_owned(),
            agent_kind: None,
            autonomy_level: None,
            config: None,
            output_summary: extras.output_summary.clone(),
            checkpoint_id: extras.checkpoint_id,
            signal_id: extras.signal_id,
        });
        let record = self.append(fx, &slot.inst.instance_id.clone(), actor, &payload)?;
        slot.inst.state = to;
        slot.inst.updated_at = record.timestamp;
        if to == LifecycleState::Finished {
            slot.inst.output_summary = extras.output_summary;
        }
        Ok(record)
    }

    /// Expires the pending checkpoint of an instance being suspended or
    /// aborted from AwaitingHuman.
    pub(crate) fn close_pending_locked(
        &self,
        fx: &mut Effects,
        slot: &mut InstanceSlot,
        actor: &ActorId,
        reason: &str,
    ) -> KernelResult<Option<String>> {
        let Some(cp_id) = slot.pending.clone() else { return Ok(None) };
        let cp = self.checkpoints.read().get(&cp_id).cloned();
        let Some(cp) = cp else { return Ok(None) };
        let mut cp = cp.lock();
        if cp.status != CheckpointStatus::Pending {
            slot.pending = None;
            return Ok(None);
        }
        let payload = Payload::Hitl(HitlPayload {
            phase: HitlPhase::Expire,
            checkpoint_id: cp_id.clone(),
            question: cp.question.clone(),
            options: Vec::new(),
            action_id: cp.action.action_id.clone(),
            action_kind: None,
            risk_class: None,
            confidence: None,
            timeout_ms: None,
            resolution: None,
            reason: Some(reason.to_owned()),
        });
        self.append(fx, &slot.inst.instance_id.clone(), actor, &payload)?;
        cp.status = CheckpointStatus::Expired;
        slot.pending = None;
        Ok(Some(cp_id))
    }

    /// Applies a human- or agent-raised lifecycle event: Launch, Suspend,
    /// Resume, Abort or Finish (the reason is the output summary). The
    /// checkpoint events are raised by the checkpoint operations.
    pub fn apply_event(
        &self,
        instance_id: &str,
        event: LifecycleEvent,
    ) -> KernelResult<(LifecycleState, JournalRecord)> {
        let slot = self.slot(instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let mut s = slot.lock();
            self.apply_event_locked(&mut fx, &mut s, &event)
        };
        self.settle(fx);
        result
    }

    pub(crate) fn apply_event_locked(
        &self,
        fx: &mut Effects,
        s: &mut InstanceSlot,
        event: &LifecycleEvent,
    ) -> KernelResult<(LifecycleState, JournalRecord)> {
        let kind = event.kind;
        self.authorize_event(s, &event.actor, kind)?;
        if kind.requires_reason() && event.reason.trim().is_empty() {
            return Err(KernelError::SchemaViolation(format!("{kind} needs a reason")));
        }
        if let TransitionCheck::Denied(reason) = validate_transition(s.inst.state, kind) {
            return Err(KernelError::IllegalTransition {
                from: s.inst.state,
                event: kind,
                reason,
            });
        }
        let mut extras = TransitionExtras::default();
        match kind {
            EventKind::OpenCheckpoint
            | EventKind::ResolveProceed
            | EventKind::ResolveDeny
            | EventKind::CheckpointTimeout => {
                return Err(KernelError::IllegalTransition {
                    from: s.inst.state,
                    event: kind,
                    reason: "raised by checkpoint operations only".to_owned(),
                });
            }
            EventKind::Launch => {
                if self.cfg.block_launch_on_anomaly {
                    if let Some(signal_id) = self.open_signal_for(&s.inst.config.agent_kind) {
                        return Err(KernelError::LaunchBlocked {
                            agent_kind: s.inst.config.agent_kind.clone(),
                            signal_id,
                        });
                    }
                }
            }
            EventKind::Finish => {
                if event.reason.trim().is_empty() {
                    return Err(KernelError::SchemaViolation(
                        "finish needs a non-empty output summary".to_owned(),
                    ));
                }
                extras.output_summary = Some(event.reason.clone());
            }
            EventKind::Suspend | EventKind::Abort => {
                extras.checkpoint_id = self.close_pending_locked(fx, s, &event.actor, &event.reason)?;
            }
            EventKind::Resume => {}
        }
        let record = self.transition_locked(fx, s, kind, &event.actor, &event.reason, extras)?;
        Ok((s.inst.state, record))
    }

    pub fn launch(&self, instance_id: &str, actor: &ActorId) -> KernelResult<LifecycleState> {
        self.apply_event(instance_id, LifecycleEvent::new(EventKind::Launch, actor.clone(), "launched"))
            .map(|r| r.0)
    }

    pub fn finish(&self, instance_id: &str, actor: &ActorId, summary: &str) -> KernelResult<LifecycleState> {
        self.apply_event(instance_id, LifecycleEvent::new(EventKind::Finish, actor.clone(), summary))
            .map(|r| r.0)
    }

    pub fn abort(&self, instance_id: &str, actor: &ActorId, reason: &str) -> KernelResult<LifecycleState> {
        self.apply_event(instance_id, LifecycleEvent::new(EventKind::Abort, actor.clone(), reason))
            .map(|r| r.0)
    }

    pub fn suspend(&self, instance_id: &str, actor: &ActorId, reason: &str) -> KernelResult<LifecycleState> {
        self.apply_event(instance_id, LifecycleEvent::new(EventKind::Suspend, actor.clone(), reason))
            .map(|r| r.0)
    }

    pub fn resume(&self, instance_id: &str, actor: &ActorId, reason: &str) -> KernelResult<LifecycleState> {
        self.apply_event(instance_id, LifecycleEvent::new(EventKind::Resume, actor.clone(), reason))
            .map(|r| r.0)
    }

    /// Checks that `actor` is the owning agent and the instance is Active.
    pub(crate) fn agent_write_locked(&self, s: &InstanceSlot, actor: &ActorId) -> KernelResult<()> {
        let role = self.require_actor(actor)?.role;
        if role != Role::Agent || s.inst.config.owner != *actor {
            return Err(KernelError::Unauthorized(format!(
                "only the owning agent reports work for {}",
                s.inst.instance_id
            )));
        }
        if s.inst.state != LifecycleState::Active {
            return Err(KernelError::IllegalState(format!(
                "{} is {}, not Active",
                s.inst.instance_id, s.inst.state
            )));
        }
        Ok(())
    }

    pub fn report_progress(
        &self,
        instance_id: &str,
        actor: &ActorId,
        step: &str,
        detail: &str,
    ) -> KernelResult<JournalRecord> {
        if step.trim().is_empty() {
            return Err(KernelError::SchemaViolation("step must be non-empty".to_owned()));
        }
        let slot = self.slot(instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let s = slot.lock();
            self.agent_write_locked(&s, actor).and_then(|_| {
                let payload = Payload::WorkProgress(WorkProgressPayload {
                    step: step.to_owned(),
                    status: ProgressStatus::Progress,
                    detail: detail.to_owned(),
                    action: None,
                });
                self.append(&mut fx, instance_id, actor, &payload)
            })
        };
        self.settle(fx);
        result
    }

    /// Journals a decision. An empty `decision_id` is assigned.
    pub fn record_decision(
        &self,
        instance_id: &str,
        actor: &ActorId,
        mut decision: DecisionPayload,
    ) -> KernelResult<JournalRecord> {
        if decision.decision_id.trim().is_empty() {
            decision.decision_id = self.next_id("dec", &self.ids.decision, 6);
        }
        if !(0.0..=1.0).contains(&decision.confidence) {
            return Err(KernelError::SchemaViolation(format!(
                "confidence {} outside [0, 1]",
                decision.confidence
            )));
        }
        let slot = self.slot(instance_id)?;
        let mut fx = Effects::default();
        let result = {
            let s = slot.lock();
            self.agent_write_locked(&s, actor)
                .and_then(|_| self.append(&mut fx, instance_id, actor, &Payload::Decision(decision)))
        };
        self.settle(fx);
        result
    }
}
