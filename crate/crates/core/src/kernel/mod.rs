//! The in-process governance kernel. Owns instances, checkpoints, kind
//! policies and the sentinel, and writes every change to the journal.
//!
//! Locking: an operation holds at most one instance lock at a time, and takes
//! a checkpoint or action entry only while holding its instance's lock.
//! Sentinel ingestion and fallback run after the caller's locks are released.

mod autonomy_ops;
mod error;
mod hitl_ops;
mod lifecycle_ops;
mod recover;
mod sentinel_ops;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::actor::{constant_time_eq, Actor, ActorId, Role};
use crate::analytics::{self, MetricsSnapshot};
use crate::autonomy::{AgentKindPolicy, AutonomyLevel, ChangeRequest};
use crate::clock::{Clock, Millis};
use crate::events::{EventLog, FramePayload, ReviewTask};
use crate::hitl::{ActionDescriptor, Checkpoint, CheckpointStatus, GateDecision};
use crate::journal::payload::Payload;
use crate::journal::{is_kind_stream, JournalRecord, JournalStore, ReplayedState};
use crate::lifecycle::AgentInstance;
use crate::sentinel::{Sentinel, SentinelConfig};

pub use autonomy_ops::ChangeOutcome;
pub use error::KernelError;
pub use hitl_ops::{ActionOutcome, ExecutionOutcome, ResolveOutcome};
pub use sentinel_ops::SignalState;

pub type KernelResult<T> = Result<T, KernelError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub sentinel: SentinelConfig,
    /// Seed for spot-check selection.
    #[serde(default)]
    pub spot_check_seed: u64,
    /// Refuse Launch for a kind while it has an unacknowledged anomaly.
    #[serde(default = "yes")]
    pub block_launch_on_anomaly: bool,
    /// Demote a kind one level when its anomaly triggers fallback.
    #[serde(default = "yes")]
    pub demote_on_anomaly: bool,
}

fn yes() -> bool {
    true
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            sentinel: SentinelConfig::default(),
            spot_check_seed: 0,
            block_launch_on_anomaly: true,
            demote_on_anomaly: true,
        }
    }
}

pub(crate) struct KindSlot {
    policy: RwLock<AgentKindPolicy>,
    // Serializes autonomy changes for the kind.
    change_lock: Mutex<()>,
}

pub(crate) struct InstanceSlot {
    inst: AgentInstance,
    pending: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub action_id: String,
    pub instance_id: String,
    pub descriptor: ActionDescriptor,
    pub gate: GateDecision,
    pub checkpoint_id: Option<String>,
    pub executed: bool,
    pub reported_at: Millis,
}

#[derive(Default)]
struct Counters {
    instance: AtomicU64,
    checkpoint: AtomicU64,
    action: AtomicU64,
    change: AtomicU64,
    review: AtomicU64,
    decision: AtomicU64,
}

impl Counters {
    fn next(c: &AtomicU64) -> u64 {
        c.fetch_add(1, Ordering::Relaxed) + 1
    }
}

pub struct Kernel {
    cfg: KernelConfig,
    clock: Arc<dyn Clock>,
    journal: Arc<JournalStore>,
    events: Arc<EventLog>,
    sentinel: Sentinel,
    actors: RwLock<HashMap<ActorId, Actor>>,
    kinds: RwLock<BTreeMap<String, Arc<KindSlot>>>,
    instances: RwLock<HashMap<String, Arc<Mutex<InstanceSlot>>>>,
    instance_order: RwLock<Vec<String>>,
    instance_kind: RwLock<HashMap<String, String>>,
    checkpoints: RwLock<HashMap<String, Arc<Mutex<Checkpoint>>>>,
    actions: Mutex<HashMap<String, ActionEntry>>,
    changes: Mutex<BTreeMap<String, ChangeRequest>>,
    signals: Mutex<BTreeMap<String, SignalState>>,
    reviews: Mutex<Vec<ReviewTask>>,
    ids: Counters,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("instances", &self.instances.read().len())
            .field("kinds", &self.kinds.read().len())
            .field("journal", &self.journal)
            .finish()
    }
}

impl Kernel {
    pub fn new(cfg: KernelConfig, clock: Arc<dyn Clock>) -> Self {
        Self::with_journal(cfg, clock, Arc::new(JournalStore::new()))
    }

    /// Uses `journal` as the backing store. It should be empty; use
    /// [`Kernel::recover`] to resume from existing records.
    pub fn with_journal(cfg: KernelConfig, clock: Arc<dyn Clock>, journal: Arc<JournalStore>) -> Self {
        let sentinel = Sentinel::new(cfg.sentinel.clone());
        let kernel = Kernel {
            cfg,
            clock,
            journal,
            events: Arc::new(EventLog::new()),
            sentinel,
            actors: RwLock::new(HashMap::new()),
            kinds: RwLock::new(BTreeMap::new()),
            instances: RwLock::new(HashMap::new()),
            instance_order: RwLock::new(Vec::new()),
            instance_kind: RwLock::new(HashMap::new()),
            checkpoints: RwLock::new(HashMap::new()),
            actions: Mutex::new(HashMap::new()),
            changes: Mutex::new(BTreeMap::new()),
            signals: Mutex::new(BTreeMap::new()),
            reviews: Mutex::new(Vec::new()),
            ids: Counters::default(),
        };
        kernel.register_actor(Actor::sentinel());
        kernel
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    pub fn journal(&self) -> &Arc<JournalStore> {
        &self.journal
    }

    pub fn events(&self) -> &Arc<EventLog> {
        &self.events
    }

    pub fn sentinel(&self) -> &Sentinel {
        &self.sentinel
    }

    // ---- actors ----

    pub fn register_actor(&self, actor: Actor) {
        self.actors.write().insert(actor.id.clone(), actor);
    }

    pub fn actor(&self, id: &ActorId) -> Option<Actor> {
        self.actors.read().get(id).cloned()
    }

    pub fn role_of(&self, id: &ActorId) -> Option<Role> {
        self.actors.read().get(id).map(|a| a.role)
    }

    /// Finds the actor holding `token`. Every registered token is compared in
    /// constant time so the scan does not leak which prefix matched.
    pub fn authenticate(&self, token: &str) -> Option<Actor> {
        let actors = self.actors.read();
        let mut found = None;
        for a in actors.values() {
            if let Some(t) = &a.token {
                if constant_time_eq(t.as_bytes(), token.as_bytes()) && found.is_none() {
                    found = Some(a.clone());
                }
            }
        }
        found
    }

    fn require_actor(&self, id: &ActorId) -> KernelResult<Actor> {
        self.actor(id)
            .ok_or_else(|| KernelError::UnknownActor(id.to_string()))
    }

    // ---- kinds ----

    pub fn kind_policy(&self, name: &str) -> KernelResult<AgentKindPolicy> {
        Ok(self.kind_slot(name)?.policy.read().clone())
    }

    pub fn kind_level(&self, name: &str) -> KernelResult<AutonomyLevel> {
        Ok(self.kind_slot(name)?.policy.read().level)
    }

    pub fn kinds(&self) -> Vec<AgentKindPolicy> {
        self.kinds
            .read()
            .values()
            .map(|k| k.policy.read().clone())
            .collect()
    }

    fn kind_slot(&self, name: &str) -> KernelResult<Arc<KindSlot>> {
        self.kinds
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| KernelError::UnknownAgentKind(name.to_owned()))
    }

    // ---- instances ----

    fn slot(&self, instance_id: &str) -> KernelResult<Arc<Mutex<InstanceSlot>>> {
        self.instances
            .read()
            .get(instance_id)
            .cloned()
            .ok_or_else(|| KernelError::UnknownInstance(instance_id.to_owned()))
    }

    pub fn instance(&self, instance_id: &str) -> KernelResult<AgentInstance> {
        Ok(self.slot(instance_id)?.lock().inst.clone())
    }

    /// Instances in creation order. `query` matches case-insensitively against
    /// id, kind, scope, objectives and state.
    pub fn instances(&self, query: Option<&str>) -> Vec<AgentInstance> {
        let order = self.instance_order.read().clone();
        let needle = query.map(str::to_lowercase).filter(|q| !q.trim().is_empty());
        order
            .iter()
            .filter_map(|id| self.instance(id).ok())
            .filter(|i| match &needle {
                None => true,
                Some(q) => {
                    let c = &i.config;
                    [
                        i.instance_id.as_str(),
                        c.agent_kind.as_str(),
                        c.scope.as_str(),
                        i.state.as_str(),
                    ]
                    .into_iter()
                    .chain(c.objectives.iter().map(String::as_str))
                    .any(|f| f.to_lowercase().contains(q))
                }
            })
            .collect()
    }

    pub fn instance_kind(&self, instance_id: &str) -> Option<String> {
        self.instance_kind.read().get(instance_id).cloned()
    }

    /// The live counterpart of [`JournalStore::replay_state`].
    pub fn live_state(&self, instance_id: &str) -> KernelResult<ReplayedState> {
        let slot = self.slot(instance_id)?;
        let s = slot.lock();
        Ok(ReplayedState {
            instance_id: s.inst.instance_id.clone(),
            agent_kind: s.inst.config.agent_kind.clone(),
            state: s.inst.state,
            autonomy_level: s.inst.autonomy_level,
            open_checkpoints: s.pending.iter().cloned().collect(),
            output_summary: s.inst.output_summary.clone(),
        })
    }

    // ---- checkpoints, actions, reviews ----

    pub fn checkpoint(&self, checkpoint_id: &str) -> KernelResult<Checkpoint> {
        self.checkpoints
            .read()
            .get(checkpoint_id)
            .map(|c| c.lock().clone())
            .ok_or_else(|| KernelError::UnknownCheckpoint(checkpoint_id.to_owned()))
    }

    /// Checkpoints ordered by id, optionally filtered by status.
    pub fn checkpoints(&self, status: Option<CheckpointStatus>) -> Vec<Checkpoint> {
        let all: Vec<Arc<Mutex<Checkpoint>>> = self.checkpoints.read().values().cloned().collect();
        let mut out: Vec<Checkpoint> = all
            .iter()
            .map(|c| c.lock().clone())
            .filter(|c| status.is_none_or(|s| c.status == s))
            .collect();
        out.sort_by(|a, b| a.checkpoint_id.cmp(&b.checkpoint_id));
        out
    }

    pub fn action(&self, action_id: &str) -> Option<ActionEntry> {
        self.actions.lock().get(action_id).cloned()
    }

    pub fn reviews(&self) -> Vec<ReviewTask> {
        self.reviews.lock().clone()
    }

    // ---- analytics ----

    pub fn snapshot(&self, as_of: Option<Millis>) -> MetricsSnapshot {
        let records = self.journal.all_records();
        analytics::snapshot(&records, as_of.unwrap_or_else(|| self.now()))
    }

    // ---- journal plumbing ----

    /// Appends, publishes the record frame and remembers it for the sentinel.
    fn append(
        &self,
        fx: &mut Effects,
        stream: &str,
        actor: &ActorId,
        payload: &Payload,
    ) -> KernelResult<JournalRecord> {
        let now = self.now();
        let record = self
            .journal
            .append_payload(stream, actor, now, payload)
            .map_err(|e| {
                if let crate::journal::JournalError::StorageFailure(msg) = &e {
                    tracing::error!(%stream, %msg, "journal append failed");
                }
                KernelError::from(e)
            })?;
        self.events.publish(now, FramePayload::Record(record.clone()));
        fx.records.push(record.clone());
        Ok(record)
    }

    fn publish(&self, payload: FramePayload) -> u64 {
        self.events.publish(self.now(), payload)
    }

    /// Feeds new instance records to the sentinel and runs any detection the
    /// cadence calls for. Must be called with no instance lock held.
    fn settle(&self, fx: Effects) {
        let mut queue = fx.records;
        while !queue.is_empty() {
            let mut due: Vec<String> = Vec::new();
            for r in queue.drain(..) {
                if is_kind_stream(&r.instance_id) {
                    continue;
                }
                let Some(kind) = self.instance_kind(&r.instance_id) else { continue };
                let outcome = self.sentinel.ingest(&kind, &r);
                if outcome.check_due && !due.contains(&kind) {
                    due.push(kind);
                }
            }
            for kind in due {
                match self.detect_and_contain(&kind) {
                    Ok(more) => queue.extend(more),
                    Err(e) => tracing::warn!(%kind, error = %e, "sentinel containment failed"),
                }
            }
        }
    }

    fn next_id(&self, prefix: &str, counter: &AtomicU64, width: usize) -> String {
        format!("{prefix}-{:0width$}", Counters::next(counter))
    }
}

/// Records produced by an operation, handed to the sentinel once locks drop.
#[derive(Default)]
pub(crate) struct Effects {
    records: Vec<JournalRecord>,
}
