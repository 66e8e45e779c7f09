//! Post-hoc journal scans: gate soundness and autonomy history. These only
//! read records, so they can audit any exported journal.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::actor::{ActorId, Role, SENTINEL_ID};
use crate::autonomy::{AutonomyLevel, AutonomyPhase};
use crate::hitl::GateDecisionKind;
use crate::journal::payload::{HitlPhase, ProgressStatus};
use crate::journal::{JournalRecord, RecordRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record: RecordRef,
    pub reason: String,
}

/// Executed (or failed) actions whose gate did not allow execution: a
/// `RequireApproval` action needs an earlier resolve record with a permitting
/// directive, a `Block` action may never run, and every run needs a proposal.
pub fn gate_violations(records: &[JournalRecord]) -> Vec<Violation> {
    let mut by_stream: BTreeMap<&str, Vec<&JournalRecord>> = BTreeMap::new();
    for r in records {
        by_stream.entry(r.instance_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (_, mut stream) in by_stream {
        stream.sort_by_key(|r| r.seq);
        let mut proposals: HashMap<String, (GateDecisionKind, Option<String>)> = HashMap::new();
        let mut permitted: HashMap<String, bool> = HashMap::new();
        for r in stream {
            if let Some(h) = r.hitl() {
                if h.phase == HitlPhase::Resolve {
                    let ok = h
                        .resolution
                        .map(|res| res.directive.permits_execution())
                        .unwrap_or(false);
                    permitted.insert(h.checkpoint_id, ok);
                }
                continue;
            }
            let Some(p) = r.work_progress() else { continue };
            let Some(action) = p.action else { continue };
            match p.status {
                ProgressStatus::Proposed => {
                    if let Some(gate) = action.gate {
                        proposals.insert(action.action_id, (gate, action.checkpoint_id));
                    }
                }
                ProgressStatus::Executed | ProgressStatus::Error => {
                    let reason = match proposals.get(&action.action_id) {
                        None => Some(format!("action {} ran without a proposal", action.action_id)),
                        Some((GateDecisionKind::Block, _)) => {
                            Some(format!("blocked action {} ran", action.action_id))
                        }
                        Some((GateDecisionKind::RequireApproval, cp)) => {
                            let approved = cp
                                .as_ref()
                                .and_then(|c| permitted.get(c))
                                .copied()
                                .unwrap_or(false);
                            (!approved).then(|| {
                                format!("action {} ran without an approving resolution", action.action_id)
                            })
                        }
                        Some(_) => None,
                    };
                    if let Some(reason) = reason {
                        out.push(Violation {
                            record: r.id(),
                            reason,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Autonomy history problems over arrival-ordered records: changes that skip
/// levels or start from the wrong level, increases without a human approver,
/// and instances created at a level the journal never recorded for the kind.
pub fn autonomy_violations(
    records: &[JournalRecord],
    role_of: impl Fn(&ActorId) -> Option<Role>,
) -> Vec<Violation> {
    let mut level: HashMap<String, AutonomyLevel> = HashMap::new();
    let mut out = Vec::new();
    let mut flag = |r: &JournalRecord, reason: String| {
        out.push(Violation {
            record: r.id(),
            reason,
        })
    };
    for r in records {
        if let Some(a) = r.autonomy() {
            let current = level.get(&a.agent_kind).copied();
            match a.phase {
                AutonomyPhase::Registered => {
                    if current.is_some() {
                        flag(r, format!("kind {} registered twice", a.agent_kind));
                    }
                }
                AutonomyPhase::Change => {
                    if a.from_level != current {
                        flag(
                            r,
                            format!(
                                "change from {:?} but journal level is {:?}",
                                a.from_level, current
                            ),
                        );
                    }
                    let from = a.from_level.map(|l| l.value() as i16).unwrap_or(0);
                    if (a.to_level.value() as i16 - from).abs() != 1 {
                        flag(r, format!("change {:?} -> {} is not one step", a.from_level, a.to_level));
                    }
                    if a.is_increase() {
                        let human_approver = match &a.approved_by {
                            None => false,
                            Some(id) if id.as_str() == SENTINEL_ID => false,
                            Some(id) => role_of(id).map(Role::can_approve_autonomy).unwrap_or(true),
                        };
                        if !human_approver {
                            flag(r, format!("increase of {} without human approval", a.agent_kind));
                        }
                    }
                }
            }
            level.insert(a.agent_kind, a.to_level);
        } else if let Some(st) = r.state_transition() {
            if st.event.is_some() {
                continue;
            }
            if let (Some(kind), Some(at)) = (st.agent_kind, st.autonomy_level) {
                match level.get(&kind) {
                    Some(l) if *l == at => {}
                    known => flag(
                        r,
                        format!("instance created at {at} but journal level for {kind} is {known:?}"),
                    ),
                }
            }
        }
    }
    out
}
