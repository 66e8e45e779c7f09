use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::autonomy::{ratio, AutonomyLevel};
use crate::clock::{Millis, DAY_MS};
use crate::hitl::Directive;
use crate::journal::payload::{AnomalyPayload, HitlPhase, ProgressStatus};
use crate::journal::JournalRecord;
use crate::lifecycle::LifecycleState;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub actions: u64,
    pub checkpoints_opened: u64,
    pub resolved: u64,
    pub approvals: u64,
    pub modifications: u64,
    pub denials: u64,
    pub aborts: u64,
    pub timeouts: u64,
    /// Checkpoints opened per action reported.
    pub engagement_rate: f64,
    /// (denials + aborts) per resolved checkpoint.
    pub rejection_rate: f64,
}

/// Seconds from checkpoint open to resolution, nearest-rank percentiles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub samples: u64,
    pub median: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub as_of: Millis,
    pub instances: u64,
    pub state_distribution: BTreeMap<LifecycleState, u64>,
    /// Checkpoints per 100 actions, by agent kind.
    pub intervention_frequency: BTreeMap<String, f64>,
    pub engagement: Engagement,
    pub resolution_latency: Latency,
    pub autonomy_distribution: BTreeMap<AutonomyLevel, u64>,
    pub anomaly_count: u64,
    /// Instances created per UTC day, keyed by day start, contiguous from the
    /// first creation day to the last.
    pub adoption_series: BTreeMap<Millis, u64>,
}

/// Nearest-rank percentile of already sorted values; 0 when empty.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Dashboard metrics over records with `timestamp <= as_of`.
pub fn snapshot(records: &[JournalRecord], as_of: Millis) -> MetricsSnapshot {
    let mut kind_of: HashMap<&str, String> = HashMap::new();
    let mut state: BTreeMap<&str, LifecycleState> = BTreeMap::new();
    let mut actions: BTreeMap<String, u64> = BTreeMap::new();
    let mut opened: BTreeMap<String, u64> = BTreeMap::new();
    let mut open_at: HashMap<(String, String), Millis> = HashMap::new();
    let mut latencies = Vec::new();
    let mut kind_level: BTreeMap<String, AutonomyLevel> = BTreeMap::new();
    let mut created_days: BTreeMap<Millis, u64> = BTreeMap::new();
    let mut e = Engagement::default();
    let mut anomaly_count = 0;

    for r in records.iter().filter(|r| r.timestamp <= as_of) {
        let kind = || kind_of.get(r.instance_id.as_str()).cloned().unwrap_or_default();
        if let Some(st) = r.state_transition() {
            if st.event.is_none() {
                if let Some(k) = st.agent_kind {
                    kind_of.insert(r.instance_id.as_str(), k);
                }
                *created_days.entry(r.timestamp / DAY_MS * DAY_MS).or_default() += 1;
            }
            state.insert(r.instance_id.as_str(), st.to);
        } else if let Some(p) = r.work_progress() {
            if p.status == ProgressStatus::Proposed {
                e.actions += 1;
                *actions.entry(kind()).or_default() += 1;
            }
        } else if let Some(h) = r.hitl() {
            let key = (r.instance_id.clone(), h.checkpoint_id.clone());
            match h.phase {
                HitlPhase::Open => {
                    e.checkpoints_opened += 1;
                    *opened.entry(kind()).or_default() += 1;
                    open_at.insert(key, r.timestamp);
                }
                HitlPhase::Expire => e.timeouts += 1,
                HitlPhase::Resolve => {
                    let Some(res) = h.resolution else { continue };
                    e.resolved += 1;
                    match res.directive {
                        Directive::Proceed => e.approvals += 1,
                        Directive::ProceedWithModification => e.modifications += 1,
                        Directive::DenyAndReplan => e.denials += 1,
                        Directive::Abort => e.aborts += 1,
                    }
                    if let Some(t0) = open_at.get(&key) {
                        latencies.push(res.resolved_at.saturating_sub(*t0) as f64 / 1000.0);
                    }
                }
            }
        } else if let Some(a) = r.autonomy() {
            kind_level.insert(a.agent_kind, a.to_level);
        } else if let Some(AnomalyPayload::Signal(_)) = r.anomaly() {
            anomaly_count += 1;
        }
    }

    e.engagement_rate = ratio(e.checkpoints_opened as usize, e.actions as usize);
    e.rejection_rate = ratio((e.denials + e.aborts) as usize, e.resolved as usize);

    let mut state_distribution: BTreeMap<LifecycleState, u64> =
        LifecycleState::ALL.iter().map(|s| (*s, 0)).collect();
    for s in state.values() {
        *state_distribution.entry(*s).or_default() += 1;
    }

    let mut kinds: Vec<&String> = kind_of.values().collect();
    kinds.sort();
    kinds.dedup();
    let intervention_frequency = kinds
        .into_iter()
        .map(|k| {
            let a = actions.get(k).copied().unwrap_or(0);
            let c = opened.get(k).copied().unwrap_or(0);
            (k.clone(), 100.0 * ratio(c as usize, a as usize))
        })
        .collect();

    let mut autonomy_distribution: BTreeMap<AutonomyLevel, u64> =
        AutonomyLevel::ALL.iter().map(|l| (*l, 0)).collect();
    for l in kind_level.values() {
        *autonomy_distribution.entry(*l).or_default() += 1;
    }

    let mut adoption_series = BTreeMap::new();
    if let (Some(first), Some(last)) = (created_days.keys().next(), created_days.keys().last()) {
        let mut day = *first;
        while day <= *last {
            adoption_series.insert(day, created_days.get(&day).copied().unwrap_or(0));
            day += DAY_MS;
        }
    }

    latencies.sort_by(f64::total_cmp);
    MetricsSnapshot {
        as_of,
        instances: state.len() as u64,
        state_distribution,
        intervention_frequency,
        engagement: e,
        resolution_latency: Latency {
            samples: latencies.len() as u64,
            median: nearest_rank(&latencies, 50.0),
            p90: nearest_rank(&latencies, 90.0),
        },
        autonomy_distribution,
        anomaly_count,
        adoption_series,
    }
}
