//! Human-in-the-loop gating: action descriptors, the gate decision and
//! checkpoint types. The stateful side (opening, resolving, expiring) lives on
//! the kernel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::actor::ActorId;
use crate::autonomy::{gate_matrix, AutonomyLevel};
use crate::clock::Millis;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.7;
pub const DEFAULT_CHECKPOINT_TIMEOUT_MS: Millis = 15 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskClass {
    Low,
    Medium,
    High,
    Critical,
}

impl RiskClass {
    pub const ALL: [RiskClass; 4] = [
        RiskClass::Low,
        RiskClass::Medium,
        RiskClass::High,
        RiskClass::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskClass::Low => "Low",
            RiskClass::Medium => "Medium",
            RiskClass::High => "High",
            RiskClass::Critical => "Critical",
        }
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateDecisionKind {
    AutoProceed,
    AutoProceedNotify,
    RequireApproval,
    Block,
}

impl GateDecisionKind {
    pub const ALL: [GateDecisionKind; 4] = [
        GateDecisionKind::AutoProceed,
        GateDecisionKind::AutoProceedNotify,
        GateDecisionKind::RequireApproval,
        GateDecisionKind::Block,
    ];

    /// One step stricter, capped at `RequireApproval`. `Block` is never reached by escalation.
    pub fn escalate(self) -> Self {
        match self {
            GateDecisionKind::AutoProceed => GateDecisionKind::AutoProceedNotify,
            GateDecisionKind::AutoProceedNotify => GateDecisionKind::RequireApproval,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateDecisionKind::AutoProceed => "AutoProceed",
            GateDecisionKind::AutoProceedNotify => "AutoProceedNotify",
            GateDecisionKind::RequireApproval => "RequireApproval",
            GateDecisionKind::Block => "Block",
        }
    }
}

impl fmt::Display for GateDecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub kind: GateDecisionKind,
    pub reason: String,
    pub escalated_by_confidence: bool,
}

/// A planned agent action, as reported before it is carried out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub instance_id: String,
    /// Assigned by the kernel when the agent leaves it empty.
    #[serde(default)]
    pub action_id: Option<String>,
    pub action_kind: String,
    #[serde(default)]
    pub description: String,
    /// Defaults to the instance's configured risk class.
    #[serde(default)]
    pub risk_class: Option<RiskClass>,
    pub confidence: f64,
    #[serde(default)]
    pub payload_preview: BTreeMap<String, Value>,
}

/// Per-kind gate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatePolicy {
    pub confidence_threshold: f64,
    /// When set, action kinds outside the list are blocked outright.
    #[serde(default)]
    pub allowed_action_kinds: Option<BTreeSet<String>>,
}

impl Default for GatePolicy {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            allowed_action_kinds: None,
        }
    }
}

/// Decides how much human oversight an action needs. Pure in its inputs.
///
/// `risk` must already be defaulted from the instance configuration.
pub fn evaluate_gate(
    action_kind: &str,
    risk: RiskClass,
    confidence: f64,
    level: AutonomyLevel,
    policy: &GatePolicy,
) -> GateDecision {
    if let Some(allowed) = &policy.allowed_action_kinds {
        if !allowed.contains(action_kind) {
            return GateDecision {
                kind: GateDecisionKind::Block,
                reason: format!("action kind '{action_kind}' is not registered for this agent kind"),
                escalated_by_confidence: false,
            };
        }
    }

    let base = gate_matrix(level, risk);
    // NaN confidence counts as low confidence.
    let low_confidence = confidence.is_nan() || confidence < policy.confidence_threshold;
    let escalated = if low_confidence { base.escalate() } else { base };
    let escalated_by_confidence = escalated != base;

    let mut reason = format!("{risk} risk at {level} level: {base}");
    if escalated_by_confidence {
        reason.push_str(&format!(
            "; confidence {confidence} below {} escalates to {escalated}",
            policy.confidence_threshold
        ));
    }
    if risk == RiskClass::Critical {
        reason.push_str("; critical actions always need human approval");
    }
    GateDecision {
        kind: escalated,
        reason,
        escalated_by_confidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Proceed,
    ProceedWithModification,
    DenyAndReplan,
    Abort,
}

impl Directive {
    pub const ALL: [Directive; 4] = [
        Directive::Proceed,
        Directive::ProceedWithModification,
        Directive::DenyAndReplan,
        Directive::Abort,
    ];

    /// Whether the gated action may be carried out afterwards.
    pub fn permits_execution(self) -> bool {
        matches!(self, Directive::Proceed | Directive::ProceedWithModification)
    }

    /// Counted against promotion evidence and in rejection rates.
    pub fn is_rejection(self) -> bool {
        matches!(self, Directive::DenyAndReplan | Directive::Abort)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Directive::Proceed => "proceed",
            Directive::ProceedWithModification => "proceed_with_modification",
            Directive::DenyAndReplan => "deny_and_replan",
            Directive::Abort => "abort",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Directive::Proceed => "Approve",
            Directive::ProceedWithModification => "Approve with changes",
            Directive::DenyAndReplan => "Deny and re-plan",
            Directive::Abort => "Abort agent",
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointOption {
    pub directive: Directive,
    pub label: String,
}

pub fn default_options() -> Vec<CheckpointOption> {
    Directive::ALL
        .iter()
        .map(|d| CheckpointOption {
            directive: *d,
            label: d.label().to_owned(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckpointStatus {
    Pending,
    Resolved,
    Expired,
}

/// What a human submits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRequest {
    pub directive: Directive,
    #[serde(default)]
    pub modification: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub directive: Directive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modification: Option<BTreeMap<String, Value>>,
    pub note: String,
    pub resolver: ActorId,
    pub resolved_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub checkpoint_id: String,
    pub instance_id: String,
    pub action: ActionDescriptor,
    pub gate: GateDecision,
    pub question: String,
    pub options: Vec<CheckpointOption>,
    pub opened_at: Millis,
    pub timeout_ms: Millis,
    pub status: CheckpointStatus,
    pub resolution: Option<Resolution>,
}

impl Checkpoint {
    pub fn due_at(&self) -> Millis {
        self.opened_at.saturating_add(self.timeout_ms)
    }

    pub fn is_due(&self, now: Millis) -> bool {
        self.status == CheckpointStatus::Pending && self.due_at() <= now
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate(level: AutonomyLevel, risk: RiskClass, confidence: f64) -> GateDecision {
        evaluate_gate("send", risk, confidence, level, &GatePolicy::default())
    }

    #[test]
    fn assisted_low_risk_still_needs_approval() {
        assert_eq!(
            gate(AutonomyLevel::Assisted, RiskClass::Low, 0.9).kind,
            GateDecisionKind::RequireApproval
        );
    }

    #[test]
    fn critical_needs_approval_even_at_full_autonomy() {
        let d = gate(AutonomyLevel::FullWithGovernance, RiskClass::Critical, 0.99);
        assert_eq!(d.kind, GateDecisionKind::RequireApproval);
        assert!(!d.escalated_by_confidence);
    }

    #[test]
    fn low_confidence_escalates_one_step() {
        let d = gate(AutonomyLevel::Supervised, RiskClass::Medium, 0.5);
        assert_eq!(d.kind, GateDecisionKind::RequireApproval);
        assert!(d.escalated_by_confidence);
        let d = gate(AutonomyLevel::Supervised, RiskClass::Low, 0.5);
        assert_eq!(d.kind, GateDecisionKind::AutoProceedNotify);
    }

    #[test]
    fn threshold_is_inclusive_for_proceeding() {
        let d = gate(AutonomyLevel::Supervised, RiskClass::Low, 0.7);
        assert_eq!(d.kind, GateDecisionKind::AutoProceed);
    }

    #[test]
    fn nan_confidence_is_treated_as_low() {
        let d = gate(AutonomyLevel::Supervised, RiskClass::Low, f64::NAN);
        assert_eq!(d.kind, GateDecisionKind::AutoProceedNotify);
    }

    #[test]
    fn unregistered_action_kind_is_blocked() {
        let policy = GatePolicy {
            allowed_action_kinds: Some(["draft".to_owned()].into_iter().collect()),
            ..GatePolicy::default()
        };
        let d = evaluate_gate(
            "wire_transfer",
            RiskClass::Low,
            0.99,
            AutonomyLevel::Assisted,
            &policy,
        );
        assert_eq!(d.kind, GateDecisionKind::Block);
    }

    #[test]
    fn escalation_never_reaches_block() {
        assert_eq!(
            GateDecisionKind::RequireApproval.escalate(),
            GateDecisionKind::RequireApproval
        );
        assert_eq!(GateDecisionKind::Block.escalate(), GateDecisionKind::Block);
    }

    #[test]
    fn directive_wire_names() {
        assert_eq!(
            serde_json::to_string(&Directive::ProceedWithModification).unwrap(),
            "\"proceed_with_modification\""
        );
    }
}
