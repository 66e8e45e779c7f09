use serde::{Deserialize, Serialize};

use super::{Effects, Kernel, KernelError, KernelResult};
use crate::actor::{ActorId, Role};
use crate::autonomy::{
    evaluate_promotion, AutonomyChangeRecord, AutonomyLevel, AutonomyPhase, ChangeRequest,
    ChangeStatus, EligibilityReport,
};
use crate::journal::kind_stream;
use crate::journal::payload::Payload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeOutcome {
    pub change: ChangeRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EligibilityReport>,
}

fn may_request(role: Role) -> bool {
    role.is_human()
}

fn may_decrease(role: Role) -> bool {
    matches!(role, Role::Operator | Role::Admin | Role::Sentinel)
}

impl Kernel {
    /// Promotion evidence for a kind, computed from the journal.
    pub fn evaluate_promotion(&self, agent_kind: &str) -> KernelResult<EligibilityReport> {
        let criteria = self.kind_policy(agent_kind)?.criteria;
        Ok(evaluate_promotion(agent_kind, &criteria, &self.journal.all_records()))
    }

    pub fn changes(&self) -> Vec<ChangeRequest> {
        self.changes.lock().values().cloned().collect()
    }

    pub fn change(&self, change_id: &str) -> KernelResult<ChangeRequest> {
        self.changes
            .lock()
            .get(change_id)
            .cloned()
            .ok_or_else(|| KernelError::UnknownChange(change_id.to_owned()))
    }

    fn check_step(&self, agent_kind: &str, to: AutonomyLevel) -> KernelResult<AutonomyLevel> {
        let from = self.kind_level(agent_kind)?;
        if from == to {
            return Err(KernelError::IllegalState(format!("'{agent_kind}' is already {to}")));
        }
        if from.value().abs_diff(to.value()) != 1 {
            return Err(KernelError::SkippedLevel { from, to });
        }
        Ok(from)
    }

    /// Starts an autonomy change. Increases wait for an approver; decreases
    /// apply at once.
    pub fn request_change(
        &self,
        agent_kind: &str,
        to: AutonomyLevel,
        requested_by: &ActorId,
        reason: &str,
    ) -> KernelResult<ChangeOutcome> {
        let from = self.check_step(agent_kind, to)?;
        let role = self.require_actor(requested_by)?.role;
        let increase = to > from;
        if !may_request(role) || (!increase && !may_decrease(role)) {
            return Err(KernelError::Unauthorized(format!(
                "{role} may not request autonomy changes to {to}"
            )));
        }
        if !increase {
            let record = self.apply_autonomy_change(agent_kind, to, requested_by, Some(requested_by), reason)?;
            let change = self.change(&record.change_id)?;
            return Ok(ChangeOutcome { change, evidence: None });
        }
        let evidence = self.evaluate_promotion(agent_kind)?;
        if !evidence.eligible {
            return Err(KernelError::NotEligible(Box::new(evidence)));
        }
        let change = ChangeRequest {
            change_id: self.next_id("chg", &self.ids.change, 6),
            agent_kind: agent_kind.to_owned(),
            from_level: from,
            to_level: to,
            requested_by: requested_by.clone(),
            requested_at: self.now(),
            status: ChangeStatus::Pending,
            reason: reason.to_owned(),
            record: None,
        };
        self.changes.lock().insert(change.change_id.clone(), change.clone());
        tracing::info!(change_id = %change.change_id, %agent_kind, %from, %to, "autonomy increase requested");
        Ok(ChangeOutcome {
            change,
            evidence: Some(evidence),
        })
    }

    /// Approves a pending increase. Eligibility is evaluated again at approval.
    pub fn approve_change(&self, change_id: &str, approver: &ActorId) -> KernelResult<ChangeOutcome> {
        let pending = self.change(change_id)?;
        if pending.status != ChangeStatus::Pending {
            return Err(KernelError::ChangeNotPending(change_id.to_owned()));
        }
        let record = self.commit_change(
            Some(change_id),
            &pending.agent_kind,
            pending.to_level,
            &pending.requested_by,
            Some(approver),
            &pending.reason,
            Some(pending.from_level),
        )?;
        Ok(ChangeOutcome {
            change: self.change(change_id)?,
            evidence: record.evidence,
        })
    }

    /// Moves a kind one level in a single step. Increases need an approver
    /// with approval authority and current eligibility.
    pub fn apply_autonomy_change(
        &self,
        agent_kind: &str,
        to: AutonomyLevel,
        requested_by: &ActorId,
        approved_by: Option<&ActorId>,
        reason: &str,
    ) -> KernelResult<AutonomyChangeRecord> {
        self.commit_change(None, agent_kind, to, requested_by, approved_by, reason, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn commit_change(
        &self,
        change_id: Option<&str>,
        agent_kind: &str,
        to: AutonomyLevel,
        requested_by: &ActorId,
        approved_by: Option<&ActorId>,
        reason: &str,
        expect_from: Option<AutonomyLevel>,
    ) -> KernelResult<AutonomyChangeRecord> {
        let slot = self.kind_slot(agent_kind)?;
        let _serial = slot.change_lock.lock();
        let from = self.check_step(agent_kind, to)?;
        if let Some(expected) = expect_from {
            if expected != from {
                return Err(KernelError::IllegalState(format!(
                    "'{agent_kind}' moved to {from} after the request was made"
                )));
            }
        }
        let increase = to > from;
        let requester = self.require_actor(requested_by)?.role;
        let evidence = if increase {
            let approver = approved_by
                .ok_or_else(|| KernelError::Unauthorized("autonomy increases need an approver".to_owned()))?;
            let role = self.require_actor(approver)?.role;
            if !role.can_approve_autonomy() {
                return Err(KernelError::Unauthorized(format!("{role} may not approve autonomy increases")));
            }
            let report = self.evaluate_promotion(agent_kind)?;
            if !report.eligible {
                return Err(KernelError::NotEligible(Box::new(report)));
            }
            Some(report)
        } else {
            if !may_decrease(requester) {
                return Err(KernelError::Unauthorized(format!("{requester} may not lower autonomy")));
            }
            None
        };

        let change_id = change_id
            .map(str::to_owned)
            .unwrap_or_else(|| self.next_id("chg", &self.ids.change, 6));
        let record = AutonomyChangeRecord {
            phase: AutonomyPhase::Change,
            change_id: change_id.clone(),
            agent_kind: agent_kind.to_owned(),
            from_level: Some(from),
            to_level: to,
            evidence,
            requested_by: requested_by.clone(),
            approved_by: approved_by.cloned().or_else(|| Some(requested_by.clone())),
            reason: reason.to_owned(),
            timestamp: self.now(),
        };
        let mut fx = Effects::default();
        let actor = approved_by.unwrap_or(requested_by);
        self.append(&mut fx, &kind_stream(agent_kind), actor, &Payload::Autonomy(record.clone()))?;
        slot.policy.write().level = to;

        let now = self.now();
        let mut changes = self.changes.lock();
        let entry = changes.entry(change_id.clone()).or_insert_with(|| ChangeRequest {
            change_id: change_id.clone(),
            agent_kind: agent_kind.to_owned(),
            from_level: from,
            to_level: to,
            requested_by: requested_by.clone(),
            requested_at: now,
            status: ChangeStatus::Pending,
            reason: reason.to_owned(),
            record: None,
        });
        entry.status = ChangeStatus::Applied;
        entry.record = Some(record.clone());
        drop(changes);
        tracing::info!(%change_id, %agent_kind, %from, %to, "autonomy level changed");
        Ok(record)
    }
}
