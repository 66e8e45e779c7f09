//! Kind-specific payload schemas. Records carry payloads as JSON; these types
//! are how the kernel writes them and how readers decode them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autonomy::{AutonomyChangeRecord, AutonomyPhase};
use crate::hitl::{CheckpointOption, GateDecisionKind, Resolution, RiskClass};
use crate::journal::record::{JournalRecord, RecordKind};
use crate::lifecycle::{AgentConfig, EventKind, LifecycleState};
use crate::autonomy::AutonomyLevel;
use crate::sentinel::{AnomalySignal, FallbackAction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTransitionPayload {
    /// `None` marks the creation record.
    pub event: Option<EventKind>,
    pub from: Option<LifecycleState>,
    pub to: LifecycleState,
    #[serde(default)]
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autonomy_level: Option<AutonomyLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressStatus {
    Progress,
    Proposed,
    Executed,
    Error,
    Replanned,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionFields {
    pub action_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_class: Option<RiskClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecisionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalated_by_confidence: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modification: Option<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkProgressPayload {
    pub step: String,
    pub status: ProgressStatus,
    #[serde(default)]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionFields>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitlPhase {
    Open,
    Resolve,
    Expire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitlPayload {
    pub phase: HitlPhase,
    pub checkpoint_id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub options: Vec<CheckpointOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_class: Option<RiskClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Why a choice was made, recorded for accountability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPayload {
    pub decision_id: String,
    #[serde(default)]
    pub data_sources_consulted: Vec<String>,
    #[serde(default)]
    pub constraints_considered: Vec<String>,
    #[serde(default)]
    pub alternatives: Vec<String>,
    pub chosen: String,
    #[serde(default)]
    pub rationale: String,
    pub confidence: f64,
    #[serde(default)]
    pub produced_artifacts: Vec<String>,
    #[serde(default)]
    pub consumed_artifacts: Vec<String>,
    /// Checkpoint that reviewed this decision, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum AnomalyPayload {
    Signal(AnomalySignal),
    Fallback(FallbackAction),
    Acknowledged { signal_id: String, note: String },
}

/// A decoded payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    StateTransition(StateTransitionPayload),
    WorkProgress(WorkProgressPayload),
    Hitl(HitlPayload),
    Decision(DecisionPayload),
    Autonomy(AutonomyChangeRecord),
    Anomaly(AnomalyPayload),
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::StateTransition(_) => RecordKind::StateTransition,
            Payload::WorkProgress(_) => RecordKind::WorkProgress,
            Payload::Hitl(_) => RecordKind::Hitl,
            Payload::Decision(_) => RecordKind::Decision,
            Payload::Autonomy(_) => RecordKind::Autonomy,
            Payload::Anomaly(_) => RecordKind::Anomaly,
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Payload::StateTransition(p) => serde_json::to_value(p),
            Payload::WorkProgress(p) => serde_json::to_value(p),
            Payload::Hitl(p) => serde_json::to_value(p),
            Payload::Decision(p) => serde_json::to_value(p),
            Payload::Autonomy(p) => serde_json::to_value(p),
            Payload::Anomaly(p) => serde_json::to_value(p),
        };
        v.expect("payload types always serialize")
    }

    /// Decodes and checks the schema of a payload for the given kind.
    pub fn decode(kind: RecordKind, value: &Value) -> Result<Payload, String> {
        fn parse<T: serde::de::DeserializeOwned>(value: &Value) -> Result<T, String> {
            T::deserialize(value).map_err(|e| e.to_string())
        }
        let payload = match kind {
            RecordKind::StateTransition => Payload::StateTransition(parse(value)?),
            RecordKind::WorkProgress => Payload::WorkProgress(parse(value)?),
            RecordKind::Hitl => Payload::Hitl(parse(value)?),
            RecordKind::Decision => Payload::Decision(parse(value)?),
            RecordKind::Autonomy => Payload::Autonomy(parse(value)?),
            RecordKind::Anomaly => Payload::Anomaly(parse(value)?),
        };
        payload.check()?;
        Ok(payload)
    }

    fn check(&self) -> Result<(), String> {
        match self {
            Payload::StateTransition(p) => {
                if p.event.is_none() && (p.from.is_some() || p.to != LifecycleState::Initiated) {
                    return Err("creation record must go from nothing to Initiated".into());
                }
                if p.event.is_none() && (p.agent_kind.is_none() || p.autonomy_level.is_none()) {
                    return Err("creation record must carry agent_kind and autonomy_level".into());
                }
                if p.event.is_some() && p.from.is_none() {
                    return Err("transition record must carry a from-state".into());
                }
                if matches!(p.event, Some(e) if e.requires_reason()) && p.reason.trim().is_empty() {
                    return Err("abort and suspend need a reason".into());
                }
            }
            Payload::WorkProgress(p) => {
                if p.step.trim().is_empty() {
                    return Err("step must be non-empty".into());
                }
                match (p.status, &p.action) {
                    (ProgressStatus::Proposed, None) => {
                        return Err("proposed progress must describe the action".into())
                    }
                    (ProgressStatus::Proposed, Some(a)) => {
                        if a.gate.is_none() || a.risk_class.is_none() || a.confidence.is_none() {
                            return Err("proposed action needs gate, risk_class and confidence".into());
                        }
                    }
                    (ProgressStatus::Executed, None) => {
                        return Err("executed progress must name the action".into())
                    }
                    _ => {}
                }
                if let Some(a) = &p.action {
                    if a.action_id.trim().is_empty() {
                        return Err("action_id must be non-empty".into());
                    }
                    if let Some(c) = a.confidence {
                        if !unit_interval(c) {
                            return Err(format!("confidence {c} outside [0, 1]"));
                        }
                    }
                }
            }
            Payload::Hitl(p) => {
                if p.checkpoint_id.trim().is_empty() {
                    return Err("checkpoint_id must be non-empty".into());
                }
                match (p.phase, &p.resolution) {
                    (HitlPhase::Resolve, None) => {
                        return Err("resolve record must carry the resolution".into())
                    }
                    (HitlPhase::Open | HitlPhase::Expire, Some(_)) => {
                        return Err("only resolve records carry a resolution".into())
                    }
                    _ => {}
                }
                if let Some(c) = p.confidence {
                    if !unit_interval(c) {
                        return Err(format!("confidence {c} outside [0, 1]"));
                    }
                }
            }
            Payload::Decision(p) => {
                if !unit_interval(p.confidence) {
                    return Err(format!("confidence {} outside [0, 1]", p.confidence));
                }
                if p.chosen.trim().is_empty() {
                    return Err("chosen must be non-empty".into());
                }
                if p.decision_id.trim().is_empty() {
                    return Err("decision_id must be non-empty".into());
                }
            }
            Payload::Autonomy(p) => {
                if p.phase == AutonomyPhase::Change {
                    let Some(from) = p.from_level else {
                        return Err("autonomy change must carry from_level".into());
                    };
                    if p.to_level > from && p.approved_by.is_none() {
                        return Err("autonomy increase must carry approved_by".into());
                    }
                }
            }
            Payload::Anomaly(AnomalyPayload::Signal(s)) => {
                if s.signal_id.trim().is_empty() {
                    return Err("signal_id must be non-empty".into());
                }
            }
            Payload::Anomaly(_) => {}
        }
        Ok(())
    }
}

impl JournalRecord {
    pub fn decode_payload(&self) -> Result<Payload, String> {
        Payload::decode(self.kind, &self.payload)
    }

    pub fn state_transition(&self) -> Option<StateTransitionPayload> {
        match self.kind {
            RecordKind::StateTransition => StateTransitionPayload::deserialize(&self.payload).ok(),
            _ => None,
        }
    }

    pub fn work_progress(&self) -> Option<WorkProgressPayload> {
        match self.kind {
            RecordKind::WorkProgress => WorkProgressPayload::deserialize(&self.payload).ok(),
            _ => None,
        }
    }

    pub fn hitl(&self) -> Option<HitlPayload> {
        match self.kind {
            RecordKind::Hitl => HitlPayload::deserialize(&self.payload).ok(),
            _ => None,
        }
    }

    pub fn decision(&self) -> Option<DecisionPayload> {
        match self.kind {
            RecordKind::Decision => DecisionPayload::deserialize(&self.payload).ok(),
            _ => None,
        }
    }

    pub fn autonomy(&self) -> Option<AutonomyChangeRecord> {
        match self.kind {
            RecordKind::Autonomy => AutonomyChangeRecord::deserialize(&self.payload).ok(),
            _ => None,
        }
    }

    pub fn anomaly(&self) -> Option<AnomalyPayload> {
        match self.kind {
            RecordKind::Anomaly => AnomalyPayload::deserialize(&self.payload).ok(),
            _ => None,
        }
    }
}
