use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::sentinel_ops::SignalState;
use super::{ActionEntry, InstanceSlot, Kernel, KernelConfig, KernelError, KernelResult, KindSlot};
use crate::autonomy::{AgentKindPolicy, ChangeRequest, ChangeStatus};
use crate::clock::Clock;
use crate::hitl::{default_options, ActionDescriptor, Checkpoint, CheckpointStatus, GateDecision};
use crate::journal::payload::{AnomalyPayload, HitlPhase, ProgressStatus};
use crate::journal::{is_kind_stream, ChainStatus, JournalError, JournalRecord, JournalStore};
use crate::lifecycle::{AgentInstance, LifecycleState};

fn numeric_suffix(id: &str) -> u64 {
    id.rsplit('-').next().and_then(|d| d.parse().ok()).unwrap_or(0)
}

fn bump(counter: &AtomicU64, id: &str) {
    counter.fetch_max(numeric_suffix(id), Ordering::Relaxed);
}

impl Kernel {
    /// Rebuilds kernel state from an existing journal. `policies` supplies
    /// the settings of each kind; the level recorded in the journal wins.
    /// Every stream must verify before anything is rebuilt.
    pub fn recover(
        cfg: KernelConfig,
        clock: Arc<dyn Clock>,
        journal: Arc<JournalStore>,
        policies: Vec<AgentKindPolicy>,
    ) -> KernelResult<Kernel> {
        for stream in journal.stream_names() {
            if let ChainStatus::Invalid { first_bad_seq } = journal.verify_chain(&stream)? {
                return Err(JournalError::CorruptChain {
                    instance_id: stream,
                    first_bad_seq,
                }
                .into());
            }
        }
        let kernel = Kernel::with_journal(cfg, clock, journal.clone());
        let records = journal.all_records();

        let mut policies: HashMap<String, AgentKindPolicy> =
            policies.into_iter().map(|p| (p.name.clone(), p)).collect();
        for r in &records {
            let Some(a) = r.autonomy() else { continue };
            let policy = policies
                .get_mut(&a.agent_kind)
                .ok_or_else(|| KernelError::UnknownAgentKind(a.agent_kind.clone()))?;
            policy.level = a.to_level;
            if let Some(from) = a.from_level {
                bump(&kernel.ids.change, &a.change_id);
                kernel.changes.lock().insert(
                    a.change_id.clone(),
                    ChangeRequest {
                        change_id: a.change_id.clone(),
                        agent_kind: a.agent_kind.clone(),
                        from_level: from,
                        to_level: a.to_level,
                        requested_by: a.requested_by.clone(),
                        requested_at: a.timestamp,
                        status: ChangeStatus::Applied,
                        reason: a.reason.clone(),
                        record: Some(a.clone()),
                    },
                );
            }
        }
        {
            let mut kinds = kernel.kinds.write();
            for (name, policy) in policies {
                kinds.insert(
                    name,
                    Arc::new(KindSlot {
                        policy: RwLock::new(policy),
                        change_lock: Mutex::new(()),
                    }),
                );
            }
        }

        let mut by_stream: Vec<(String, Vec<JournalRecord>)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for r in &records {
            if is_kind_stream(&r.instance_id) {
                continue;
            }
            let i = *index.entry(r.instance_id.clone()).or_insert_with(|| {
                by_stream.push((r.instance_id.clone(), Vec::new()));
                by_stream.len() - 1
            });
            by_stream[i].1.push(r.clone());
        }
        for (id, stream) in &by_stream {
            kernel.recover_instance(id, stream)?;
        }

        for r in &records {
            if is_kind_stream(&r.instance_id) {
                kernel.recover_anomaly(r);
            } else if let Some(kind) = kernel.instance_kind(&r.instance_id) {
                kernel.sentinel.ingest(&kind, r);
            }
        }
        kernel.restore_open_signals();
        tracing::info!(
            records = records.len(),
            instances = by_stream.len(),
            "kernel recovered from journal"
        );
        Ok(kernel)
    }

    fn recover_instance(&self, instance_id: &str, stream: &[JournalRecord]) -> KernelResult<()> {
        let replayed = crate::journal::replay_records(stream)?;
        let creation = stream[0]
            .state_transition()
            .and_then(|st| st.config)
            .ok_or_else(|| JournalError::Inconsistent {
                instance_id: instance_id.to_owned(),
                seq: 0,
                reason: "creation record has no config".to_owned(),
            })?;
        self.kind_slot(&creation.agent_kind)?;
        bump(&self.ids.instance, instance_id);

        let mut gates: HashMap<String, (ActionDescriptor, GateDecision)> = HashMap::new();
        for r in stream {
            if let Some(wp) = r.work_progress() {
                let Some(a) = wp.action else { continue };
                match wp.status {
                    ProgressStatus::Proposed => {
                        bump(&self.ids.action, &a.action_id);
                        let descriptor = ActionDescriptor {
                            instance_id: instance_id.to_owned(),
                            action_id: Some(a.action_id.clone()),
                            action_kind: a.action_kind.clone().unwrap_or_else(|| wp.step.clone()),
                            description: wp.detail.clone(),
                            risk_class: a.risk_class,
                            confidence: a.confidence.unwrap_or(0.0),
                            payload_preview: Default::default(),
                        };
                        let gate = GateDecision {
                            kind: a.gate.unwrap_or(crate::hitl::GateDecisionKind::RequireApproval),
                            reason: a.gate_reason.clone().unwrap_or_default(),
                            escalated_by_confidence: a.escalated_by_confidence.unwrap_or(false),
                        };
                        gates.insert(a.action_id.clone(), (descriptor.clone(), gate.clone()));
                        self.actions.lock().insert(
                            a.action_id.clone(),
                            ActionEntry {
                                action_id: a.action_id.clone(),
                                instance_id: instance_id.to_owned(),
                                descriptor,
                                gate,
                                checkpoint_id: a.checkpoint_id.clone(),
                                executed: false,
                                reported_at: r.timestamp,
                            },
                        );
                    }
                    ProgressStatus::Executed | ProgressStatus::Error => {
                        if let Some(e) = self.actions.lock().get_mut(&a.action_id) {
                            e.executed = true;
                        }
                    }
                    _ => {}
                }
            } else if let Some(h) = r.hitl() {
                bump(&self.ids.checkpoint, &h.checkpoint_id);
                let mut checkpoints = self.checkpoints.write();
                match h.phase {
                    HitlPhase::Open => {
                        let (action, gate) = h
                            .action_id
                            .as_ref()
                            .and_then(|id| gates.get(id).cloned())
                            .unwrap_or_else(|| {
                                (
                                    ActionDescriptor {
                                        instance_id: instance_id.to_owned(),
                                        action_id: h.action_id.clone(),
                                        action_kind: h.action_kind.clone().unwrap_or_default(),
                                        description: String::new(),
                                        risk_class: h.risk_class,
                                        confidence: h.confidence.unwrap_or(0.0),
                                        payload_preview: Default::default(),
                                    },
                                    GateDecision {
                                        kind: crate::hitl::GateDecisionKind::RequireApproval,
                                        reason: h.reason.clone().unwrap_or_default(),
                                        escalated_by_confidence: false,
                                    },
                                )
                            });
                        let options = if h.options.is_empty() { default_options() } else { h.options.clone() };
                        checkpoints.insert(
                            h.checkpoint_id.clone(),
                            Arc::new(Mutex::new(Checkpoint {
                                checkpoint_id: h.checkpoint_id.clone(),
                                instance_id: instance_id.to_owned(),
                                action,
                                gate,
                                question: h.question.clone(),
                                options,
                                opened_at: r.timestamp,
                                timeout_ms: h.timeout_ms.unwrap_or(crate::hitl::DEFAULT_CHECKPOINT_TIMEOUT_MS),
                                status: CheckpointStatus::Pending,
                                resolution: None,
                            })),
                        );
                    }
                    HitlPhase::Resolve | HitlPhase::Expire => {
                        if let Some(cp) = checkpoints.get(&h.checkpoint_id) {
                            let mut cp = cp.lock();
                            if h.phase == HitlPhase::Resolve {
                                cp.status = CheckpointStatus::Resolved;
                                cp.resolution = h.resolution.clone();
                            } else {
                                cp.status = CheckpointStatus::Expired;
                            }
                        }
                    }
                }
            } else if let Some(d) = r.decision() {
                bump(&self.ids.decision, &d.decision_id);
            }
        }

        let last = stream.last().expect("non-empty stream");
        let inst = AgentInstance {
            instance_id: instance_id.to_owned(),
            config: creation.clone(),
            state: replayed.state,
            autonomy_level: replayed.autonomy_level,
            created_at: stream[0].timestamp,
            updated_at: last.timestamp,
            output_summary: replayed.output_summary,
        };
        let pending = match replayed.state {
            LifecycleState::AwaitingHuman => replayed.open_checkpoints.last().cloned(),
            _ => None,
        };
        self.instances
            .write()
            .insert(instance_id.to_owned(), Arc::new(Mutex::new(InstanceSlot { inst, pending })));
        self.instance_kind
            .write()
            .insert(instance_id.to_owned(), creation.agent_kind.clone());
        self.instance_order.write().push(instance_id.to_owned());
        Ok(())
    }

    fn recover_anomaly(&self, r: &JournalRecord) {
        let Some(a) = r.anomaly() else { return };
        let mut signals = self.signals.lock();
        match a {
            AnomalyPayload::Signal(signal) => {
                signals.insert(
                    signal.signal_id.clone(),
                    SignalState {
                        signal,
                        record: r.id(),
                        handled: false,
                        acknowledged: false,
                        fallback: None,
                    },
                );
            }
            AnomalyPayload::Fallback(f) => {
                if let Some(s) = signals.get_mut(&f.signal_id) {
                    s.handled = true;
                    s.fallback = Some(f);
                }
            }
            AnomalyPayload::Acknowledged { signal_id, .. } => {
                if let Some(s) = signals.get_mut(&signal_id) {
                    s.acknowledged = true;
                }
            }
        }
    }

    /// Re-marks journal signals still awaiting acknowledgement as open in
    /// the sentinel.
    fn restore_open_signals(&self) {
        for s in self.signals.lock().values() {
            // Restoring also advances the signal id counter past this one.
            self.sentinel.restore_open(&s.signal);
            if s.acknowledged {
                self.sentinel.acknowledge(&s.signal.agent_kind, &s.signal.signal_id);
            }
        }
    }
}
