//! Autonomy levels per agent kind, the gate matrix, promotion evidence and
//! spot-check sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actor::ActorId;
use crate::clock::Millis;
use crate::hitl::{GateDecisionKind, GatePolicy, RiskClass, DEFAULT_CHECKPOINT_TIMEOUT_MS};
use crate::journal::payload::{AnomalyPayload, HitlPhase};
use crate::journal::JournalRecord;
use crate::lifecycle::LifecycleState;

/// The four evolutionary stages, totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AutonomyLevel {
    Assisted = 1,
    Collaborative = 2,
    Supervised = 3,
    FullWithGovernance = 4,
}

impl AutonomyLevel {
    pub const ALL: [AutonomyLevel; 4] = [
        AutonomyLevel::Assisted,
        AutonomyLevel::Collaborative,
        AutonomyLevel::Supervised,
        AutonomyLevel::FullWithGovernance,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.value() == v)
    }

    pub fn up(self) -> Option<Self> {
        Self::from_value(self.value() + 1)
    }

    pub fn down(self) -> Option<Self> {
        self.value().checked_sub(1).and_then(Self::from_value)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AutonomyLevel::Assisted => "Assisted",
            AutonomyLevel::Collaborative => "Collaborative",
            AutonomyLevel::Supervised => "Supervised",
            AutonomyLevel::FullWithGovernance => "FullWithGovernance",
        }
    }
}

impl fmt::Display for AutonomyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How much oversight an action of a given risk gets at a given level.
pub fn gate_matrix(level: AutonomyLevel, risk: RiskClass) -> GateDecisionKind {
    use AutonomyLevel as L;
    use GateDecisionKind as G;
    use RiskClass as R;
    match (level, risk) {
        (L::Assisted, _) => G::RequireApproval,
        (L::Collaborative, R::Low) => G::AutoProceedNotify,
        (L::Collaborative, _) => G::RequireApproval,
        (L::Supervised, R::Low) => G::AutoProceed,
        (L::Supervised, R::Medium) => G::AutoProceedNotify,
        (L::Supervised, _) => G::RequireApproval,
        (L::FullWithGovernance, R::Low | R::Medium) => G::AutoProceed,
        (L::FullWithGovernance, R::High) => G::AutoProceedNotify,
        (L::FullWithGovernance, R::Critical) => G::RequireApproval,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionCriteria {
    pub window_n: usize,
    pub min_success_rate: f64,
    pub max_rejection_rate: f64,
    pub require_zero_open_anomalies: bool,
}

impl Default for PromotionCriteria {
    fn default() -> Self {
        Self {
            window_n: 50,
            min_success_rate: 0.98,
            max_rejection_rate: 0.02,
            require_zero_open_anomalies: true,
        }
    }
}

impl PromotionCriteria {
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.window_n < 1 {
            out.push("window_n must be at least 1".to_owned());
        }
        for (name, v) in [
            ("min_success_rate", self.min_success_rate),
            ("max_rejection_rate", self.max_rejection_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} must be within [0, 1]"));
            }
        }
        out
    }
}

/// Everything the kernel knows about an agent kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentKindPolicy {
    pub name: String,
    pub level: AutonomyLevel,
    #[serde(default)]
    pub criteria: PromotionCriteria,
    #[serde(default)]
    pub gate: GatePolicy,
    #[serde(default = "default_timeout")]
    pub checkpoint_timeout_ms: Millis,
    #[serde(default)]
    pub spot_check_rate: f64,
}

fn default_timeout() -> Millis {
    DEFAULT_CHECKPOINT_TIMEOUT_MS
}

impl AgentKindPolicy {
    pub fn new(name: impl Into<String>, level: AutonomyLevel) -> Self {
        Self {
            name: name.into(),
            level,
            criteria: PromotionCriteria::default(),
            gate: GatePolicy::default(),
            checkpoint_timeout_ms: DEFAULT_CHECKPOINT_TIMEOUT_MS,
            spot_check_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub agent_kind: String,
    pub eligible: bool,
    pub window_n: usize,
    pub completed: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub resolved_checkpoints: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub open_anomalies: usize,
    pub shortfalls: Vec<String>,
}

/// Computes promotion evidence for a kind from journal records alone.
///
/// Completed instances are those that reached Finished or Aborted; the most
/// recent `window_n` by completion time form the window. A success is a
/// Finished instance, a rejection a checkpoint resolved with deny or abort.
pub fn evaluate_promotion(
    agent_kind: &str,
    criteria: &PromotionCriteria,
    records: &[JournalRecord],
) -> EligibilityReport {
    let mut kind_of: HashMap<&str, String> = HashMap::new();
    let mut completion: HashMap<&str, (Millis, LifecycleState)> = HashMap::new();
    let mut resolutions: HashMap<&str, Vec<bool>> = HashMap::new();
    let mut signals: BTreeSet<String> = BTreeSet::new();
    let mut acknowledged: BTreeSet<String> = BTreeSet::new();

    for r in records {
        if let Some(st) = r.state_transition() {
            if st.event.is_none() {
                if let Some(k) = st.agent_kind {
                    kind_of.insert(r.instance_id.as_str(), k);
                }
            } else if st.to.is_terminal() {
                completion
                    .entry(r.instance_id.as_str())
                    .or_insert((r.timestamp, st.to));
            }
        } else if let Some(h) = r.hitl() {
            if h.phase == HitlPhase::Resolve {
                if let Some(res) = h.resolution {
                    resolutions
                        .entry(r.instance_id.as_str())
                        .or_default()
                        .push(res.directive.is_rejection());
                }
            }
        } else if let Some(a) = r.anomaly() {
            match a {
                AnomalyPayload::Signal(s) if s.agent_kind == agent_kind => {
                    signals.insert(s.signal_id);
                }
                AnomalyPayload::Acknowledged { signal_id, .. } => {
                    acknowledged.insert(signal_id);
                }
                _ => {}
            }
        }
    }

    let mut completed: Vec<(Millis, &str, LifecycleState)> = completion
        .iter()
        .filter(|(id, _)| kind_of.get(*id).map(String::as_str) == Some(agent_kind))
        .map(|(id, (ts, st))| (*ts, *id, *st))
        .collect();
    completed.sort();
    let window: Vec<_> = completed
        .iter()
        .rev()
        .take(criteria.window_n)
        .collect();

    let successes = window
        .iter()
        .filter(|(_, _, st)| *st == LifecycleState::Finished)
        .count();
    let (mut resolved, mut rejections) = (0usize, 0usize);
    for (_, id, _) in &window {
        if let Some(rs) = resolutions.get(id) {
            resolved += rs.len();
            rejections += rs.iter().filter(|r| **r).count();
        }
    }
    let success_rate = ratio(successes, window.len());
    let rejection_rate = ratio(rejections, resolved);
    let open_anomalies = signals.difference(&acknowledged).count();

    let mut shortfalls = Vec::new();
    if window.len() < criteria.window_n {
        shortfalls.push(format!(
            "insufficient history: {} of {} completed runs",
            window.len(),
            criteria.window_n
        ));
    }
    if success_rate < criteria.min_success_rate {
        shortfalls.push(format!(
            "success rate {success_rate} below {}",
            criteria.min_success_rate
        ));
    }
    if rejection_rate > criteria.max_rejection_rate {
        shortfalls.push(format!(
            "rejection rate {rejection_rate} above {}",
            criteria.max_rejection_rate
        ));
    }
    if criteria.require_zero_open_anomalies && open_anomalies > 0 {
        shortfalls.push(format!("{open_anomalies} open anomaly signal(s)"));
    }

    EligibilityReport {
        agent_kind: agent_kind.to_owned(),
        eligible: shortfalls.is_empty(),
        window_n: criteria.window_n,
        completed: window.len(),
        successes,
        success_rate,
        resolved_checkpoints: resolved,
        rejections,
        rejection_rate,
        open_anomalies,
        shortfalls,
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutonomyPhase {
    /// Initial level at kind registration.
    Registered,
    Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutonomyChangeRecord {
    pub phase: AutonomyPhase,
    pub change_id: String,
    pub agent_kind: String,
    pub from_level: Option<AutonomyLevel>,
    pub to_level: AutonomyLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EligibilityReport>,
    pub requested_by: ActorId,
    pub approved_by: Option<ActorId>,
    #[serde(default)]
    pub reason: String,
    pub timestamp: Millis,
}

impl AutonomyChangeRecord {
    pub fn is_increase(&self) -> bool {
        matches!(self.from_level, Some(from) if self.to_level > from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeStatus {
    Pending,
    Applied,
}

/// An autonomy change awaiting (or having received) approval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub change_id: String,
    pub agent_kind: String,
    pub from_level: AutonomyLevel,
    pub to_level: AutonomyLevel,
    pub requested_by: ActorId,
    pub requested_at: Millis,
    pub status: ChangeStatus,
    #[serde(default)]
    pub reason: String,
    pub record: Option<AutonomyChangeRecord>,
}

/// Deterministic position of an action id in `[0, 2^64)` for a given seed.
pub fn spot_check_hash(seed: u64, action_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_be_bytes());
    hasher.update(action_id.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Whether an auto-proceeded action is picked for post-hoc review at rate `rate`.
pub fn spot_check_selected(seed: u64, action_id: &str, rate: f64) -> bool {
    if rate.is_nan() || rate <= 0.0 {
        return false;
    }
    if rate >= 1.0 {
        return true;
    }
    // rate * 2^64, saturating.
    let threshold = (rate * 18_446_744_073_709_551_616.0) as u64;
    spot_check_hash(seed, action_id) < threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheckPlan {
    pub agent_kind: String,
    pub rate: f64,
    pub seed: u64,
    pub selected: Vec<String>,
}

pub fn select_spot_checks<S: AsRef<str>>(action_ids: &[S], rate: f64, seed: u64) -> Vec<String> {
    action_ids
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| spot_check_selected(seed, id, rate))
        .map(str::to_owned)
        .collect()
}

/// Current level of every kind as recorded in the journal.
pub fn levels_from_journal(records: &[JournalRecord]) -> BTreeMap<String, AutonomyLevel> {
    let mut out = BTreeMap::new();
    for r in records {
        if let Some(a) = r.autonomy() {
            out.insert(a.agent_kind, a.to_level);
        }
    }
    out
}
