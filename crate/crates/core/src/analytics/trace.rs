//! Backward provenance walks from an incident artifact.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::actor::ActorId;
use crate::analytics::AnalyticsError;
use crate::journal::payload::DecisionPayload;
use crate::journal::{JournalRecord, RecordKind, RecordRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub record: RecordRef,
    pub kind: RecordKind,
    pub actor: ActorId,
    /// Hops from the incident artifact; 0 for the decision that produced it.
    pub depth: usize,
    /// The artifact through which this step was reached.
    pub via_artifact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityTrace {
    pub incident_artifact: String,
    /// Decision records in breadth-first order, each followed by the HITL
    /// records of the checkpoint that reviewed it.
    pub steps: Vec<TraceStep>,
}

impl ResponsibilityTrace {
    pub fn records(&self) -> Vec<RecordRef> {
        self.steps.iter().map(|s| s.record.clone()).collect()
    }

    pub fn decisions(&self) -> impl Iterator<Item = (&TraceStep, &DecisionPayload)> {
        self.steps
            .iter()
            .filter_map(|s| s.decision.as_ref().map(|d| (s, d)))
    }
}

pub fn trace_responsibility(
    records: &[JournalRecord],
    artifact_id: &str,
) -> Result<ResponsibilityTrace, AnalyticsError> {
    let mut producers: HashMap<String, Vec<(&JournalRecord, DecisionPayload)>> = HashMap::new();
    let mut hitl_by_checkpoint: HashMap<(&str, String), Vec<&JournalRecord>> = HashMap::new();
    for r in records {
        if let Some(d) = r.decision() {
            for a in &d.produced_artifacts {
                producers.entry(a.clone()).or_default().push((r, d.clone()));
            }
        } else if let Some(h) = r.hitl() {
            hitl_by_checkpoint
                .entry((r.instance_id.as_str(), h.checkpoint_id))
                .or_default()
                .push(r);
        }
    }
    if !producers.contains_key(artifact_id) {
        return Err(AnalyticsError::UnknownArtifact(artifact_id.to_owned()));
    }

    let mut steps = Vec::new();
    let mut seen_records: HashSet<RecordRef> = HashSet::new();
    let mut seen_artifacts: HashSet<String> = HashSet::new();
    let mut queue: VecDeque<(String, usize)> = VecDeque::new();
    queue.push_back((artifact_id.to_owned(), 0));
    seen_artifacts.insert(artifact_id.to_owned());

    while let Some((artifact, depth)) = queue.pop_front() {
        let Some(makers) = producers.get(&artifact) else { continue };
        for (r, d) in makers {
            if !seen_records.insert(r.id()) {
                continue;
            }
            steps.push(TraceStep {
                record: r.id(),
                kind: r.kind,
                actor: r.actor.clone(),
                depth,
                via_artifact: artifact.clone(),
                decision: Some(d.clone()),
                checkpoint_id: d.checkpoint_id.clone(),
            });
            if let Some(cp) = &d.checkpoint_id {
                if let Some(hs) = hitl_by_checkpoint.get(&(r.instance_id.as_str(), cp.clone())) {
                    for h in hs {
                        if seen_records.insert(h.id()) {
                            steps.push(TraceStep {
                                record: h.id(),
                                kind: h.kind,
                                actor: h.actor.clone(),
                                depth,
                                via_artifact: artifact.clone(),
                                decision: None,
                                checkpoint_id: Some(cp.clone()),
                            });
                        }
                    }
                }
            }
            for input in &d.consumed_artifacts {
                if seen_artifacts.insert(input.clone()) {
                    queue.push_back((input.clone(), depth + 1));
                }
            }
        }
    }
    Ok(ResponsibilityTrace {
        incident_artifact: artifact_id.to_owned(),
        steps,
    })
}

/// A decision that omits constraints its upstream decisions considered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedConstraints {
    pub record: RecordRef,
    pub decision_id: String,
    pub dropped: Vec<String>,
}

/// Walks the trace from initiation toward the incident and reports each
/// decision whose `constraints_considered` lacks something an input decision
/// carried.
pub fn find_dropped_constraints(trace: &ResponsibilityTrace) -> Vec<DroppedConstraints> {
    let by_output: HashMap<&str, Vec<&DecisionPayload>> = {
        let mut m: HashMap<&str, Vec<&DecisionPayload>> = HashMap::new();
        for (_, d) in trace.decisions() {
            for a in &d.produced_artifacts {
                m.entry(a.as_str()).or_default().push(d);
            }
        }
        m
    };
    let mut out = Vec::new();
    let mut decisions: Vec<(&TraceStep, &DecisionPayload)> = trace.decisions().collect();
    decisions.sort_by(|a, b| b.0.depth.cmp(&a.0.depth).then(a.0.record.cmp(&b.0.record)));
    for (step, d) in decisions {
        let upstream: BTreeSet<&String> = d
            .consumed_artifacts
            .iter()
            .flat_map(|a| by_output.get(a.as_str()).into_iter().flatten())
            .flat_map(|u| u.constraints_considered.iter())
            .collect();
        let mine: BTreeSet<&String> = d.constraints_considered.iter().collect();
        let dropped: Vec<String> = upstream.difference(&mine).map(|s| (*s).clone()).collect();
        if !dropped.is_empty() {
            out.push(DroppedConstraints {
                record: step.record.clone(),
                decision_id: d.decision_id.clone(),
                dropped,
            });
        }
    }
    out
}
