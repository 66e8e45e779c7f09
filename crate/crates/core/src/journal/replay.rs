//! Rebuilding an instance snapshot from its journal stream alone.

use serde::{Deserialize, Serialize};

use crate::autonomy::AutonomyLevel;
use crate::journal::payload::HitlPhase;
use crate::journal::record::JournalRecord;
use crate::journal::store::JournalError;
use crate::lifecycle::{validate_transition, LifecycleState, TransitionCheck};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayedState {
    pub instance_id: String,
    pub agent_kind: String,
    pub state: LifecycleState,
    pub autonomy_level: AutonomyLevel,
    /// Checkpoint ids opened and neither resolved nor expired, in open order.
    pub open_checkpoints: Vec<String>,
    pub output_summary: Option<String>,
}

/// Folds StateTransition and HITL records of one instance stream. Every
/// transition is checked against the lifecycle table.
pub fn replay_records(records: &[JournalRecord]) -> Result<ReplayedState, JournalError> {
    let Some(first) = records.first() else {
        return Err(JournalError::Inconsistent {
            instance_id: String::new(),
            seq: 0,
            reason: "empty stream".to_owned(),
        });
    };
    let bad = |seq: u64, reason: String| JournalError::Inconsistent {
        instance_id: first.instance_id.clone(),
        seq,
        reason,
    };

    let creation = first
        .state_transition()
        .filter(|st| st.event.is_none())
        .ok_or_else(|| bad(0, "stream does not start with a creation record".to_owned()))?;
    let mut snap = ReplayedState {
        instance_id: first.instance_id.clone(),
        agent_kind: creation.agent_kind.unwrap_or_default(),
        state: LifecycleState::Initiated,
        autonomy_level: creation.autonomy_level.unwrap_or(AutonomyLevel::Assisted),
        open_checkpoints: Vec::new(),
        output_summary: None,
    };

    for r in &records[1..] {
        if let Some(st) = r.state_transition() {
            let Some(event) = st.event else {
                return Err(bad(r.seq, "second creation record".to_owned()));
            };
            if st.from != Some(snap.state) {
                return Err(bad(
                    r.seq,
                    format!("transition from {:?} while in {}", st.from, snap.state),
                ));
            }
            match validate_transition(snap.state, event) {
                TransitionCheck::Allowed(to) if to == st.to => snap.state = to,
                TransitionCheck::Allowed(to) => {
                    return Err(bad(r.seq, format!("{event} leads to {to}, record says {}", st.to)))
                }
                TransitionCheck::Denied(why) => return Err(bad(r.seq, why)),
            }
            if snap.state == LifecycleState::Finished {
                snap.output_summary = st.output_summary;
            }
        } else if let Some(h) = r.hitl() {
            match h.phase {
                HitlPhase::Open => snap.open_checkpoints.push(h.checkpoint_id),
                HitlPhase::Resolve | HitlPhase::Expire => {
                    let before = snap.open_checkpoints.len();
                    snap.open_checkpoints.retain(|c| *c != h.checkpoint_id);
                    if snap.open_checkpoints.len() == before {
                        return Err(bad(
                            r.seq,
                            format!("checkpoint {} closed without being open", h.checkpoint_id),
                        ));
                    }
                }
            }
        }
    }
    Ok(snap)
}
