use serde::{Deserialize, Serialize};

use super::lifecycle_ops::TransitionExtras;
use super::{Effects, Kernel, KernelError, KernelResult};
use crate::actor::ActorId;
use crate::events::FramePayload;
use crate::journal::payload::{AnomalyPayload, Payload};
use crate::journal::{kind_stream, JournalRecord, RecordRef};
use crate::lifecycle::EventKind;
use crate::sentinel::{AnomalySignal, FallbackAction, SentinelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalState {
    pub signal: AnomalySignal,
    pub record: RecordRef,
    /// Fallback has run (or is running).
    pub handled: bool,
    pub acknowledged: bool,
    pub fallback: Option<FallbackAction>,
}

impl Kernel {
    pub fn signals(&self) -> Vec<SignalState> {
        self.signals.lock().values().cloned().collect()
    }

    pub fn signal(&self, signal_id: &str) -> KernelResult<SignalState> {
        self.signals
            .lock()
            .get(signal_id)
            .cloned()
            .ok_or_else(|| KernelError::UnknownSignal(signal_id.to_owned()))
    }

    /// The oldest unacknowledged signal for a kind.
    pub fn open_signal_for(&self, agent_kind: &str) -> Option<String> {
        self.signals
            .lock()
            .values()
            .find(|s| s.signal.agent_kind == agent_kind && !s.acknowledged)
            .map(|s| s.signal.signal_id.clone())
    }

    /// Runs a detection pass for a kind now and contains whatever it finds.
    /// Unlike the cadence-driven pass, a short baseline is reported.
    pub fn detect(&self, agent_kind: &str) -> KernelResult<Vec<SignalState>> {
        self.kind_slot(agent_kind)?;
        let mut fx = Effects::default();
        let found = self.detect_into(&mut fx, agent_kind);
        self.settle(fx);
        let ids = found?;
        ids.iter().map(|id| self.signal(id)).collect()
    }

    /// Cadence-driven detection. Returns the instance records written during
    /// containment so the caller can feed them back to the sentinel.
    pub(crate) fn detect_and_contain(&self, agent_kind: &str) -> KernelResult<Vec<JournalRecord>> {
        let mut fx = Effects::default();
        match self.detect_into(&mut fx, agent_kind) {
            Ok(_) | Err(KernelError::Sentinel(SentinelError::InsufficientBaseline { .. })) => {}
            Err(e) => return Err(e),
        }
        Ok(fx.records)
    }

    fn detect_into(&self, fx: &mut Effects, agent_kind: &str) -> KernelResult<Vec<String>> {
        let found = self.sentinel.detect(agent_kind, self.now())?;
        let sentinel = ActorId::sentinel();
        let stream = kind_stream(agent_kind);
        let mut ids = Vec::new();
        for signal in found {
            let record = self.append(
                fx,
                &stream,
                &sentinel,
                &Payload::Anomaly(AnomalyPayload::Signal(signal.clone())),
            )?;
            ids.push(signal.signal_id.clone());
            self.signals.lock().insert(
                signal.signal_id.clone(),
                SignalState {
                    signal,
                    record: record.id(),
                    handled: false,
                    acknowledged: false,
                    fallback: None,
                },
            );
        }
        for id in &ids {
            if let Err(e) = self.fallback_into(fx, id) {
                tracing::error!(signal_id = %id, error = %e, "fallback failed");
            }
        }
        Ok(ids)
    }

    /// Suspends the kind's live instances, demotes the kind one level,
    /// escalates and journals the fallback. Runs at most once per signal.
    pub fn trigger_fallback(&self, signal_id: &str) -> KernelResult<FallbackAction> {
        let mut fx = Effects::default();
        let result = self.fallback_into(&mut fx, signal_id);
        self.settle(fx);
        result
    }

    fn fallback_into(&self, fx: &mut Effects, signal_id: &str) -> KernelResult<FallbackAction> {
        let (signal, signal_ref) = {
            let mut signals = self.signals.lock();
            let state = signals
                .get_mut(signal_id)
                .ok_or_else(|| KernelError::UnknownSignal(signal_id.to_owned()))?;
            if state.handled {
                return Err(KernelError::AlreadyHandled(signal_id.to_owned()));
            }
            state.handled = true;
            (state.signal.clone(), state.record.clone())
        };
        let kind = signal.agent_kind.clone();
        let sentinel = ActorId::sentinel();
        let reason = format!("anomaly {signal_id}: {} at {:.4}", signal.metric, signal.observed);

        let ids: Vec<String> = self
            .instance_order
            .read()
            .iter()
            .filter(|id| self.instance_kind(id).as_deref() == Some(kind.as_str()))
            .cloned()
            .collect();
        let mut suspended = Vec::new();
        for id in ids {
            let Ok(slot) = self.slot(&id) else { continue };
            let mut s = slot.lock();
            if !s.inst.state.is_live() {
                continue;
            }
            let step = self
                .close_pending_locked(fx, &mut s, &sentinel, &reason)
                .and_then(|cp| {
                    let extras = TransitionExtras {
                        checkpoint_id: cp,
                        signal_id: Some(signal_id.to_owned()),
                        output_summary: None,
                    };
                    self.transition_locked(fx, &mut s, EventKind::Suspend, &sentinel, &reason, extras)
                });
            match step {
                Ok(_) => suspended.push(id),
                Err(e) => tracing::error!(instance_id = %id, error = %e, "fallback suspend failed"),
            }
        }

        let mut demotion_applied = false;
        if self.cfg.demote_on_anomaly {
            if let Some(down) = self.kind_level(&kind)?.down() {
                let why = format!("demoted after {reason}");
                match self.apply_autonomy_change(&kind, down, &sentinel, Some(&sentinel), &why) {
                    Ok(_) => demotion_applied = true,
                    Err(e) => tracing::error!(%kind, error = %e, "fallback demotion failed"),
                }
            }
        }

        self.publish(FramePayload::Escalation {
            reason: format!("{reason}; {} instance(s) suspended", suspended.len()),
            agent_kind: Some(kind.clone()),
            instance_id: None,
            checkpoint_id: None,
            signal_id: Some(signal_id.to_owned()),
        });
        let action = FallbackAction {
            signal_id: signal_id.to_owned(),
            suspended_instances: suspended,
            escalation_record: signal_ref,
            demotion_applied,
        };
        self.append(
            fx,
            &kind_stream(&kind),
            &sentinel,
            &Payload::Anomaly(AnomalyPayload::Fallback(action.clone())),
        )?;
        if let Some(state) = self.signals.lock().get_mut(signal_id) {
            state.fallback = Some(action.clone());
        }
        tracing::warn!(%kind, %signal_id, suspended = action.suspended_instances.len(), demotion_applied, "fallback applied");
        Ok(action)
    }

    /// Records a human acknowledgement, which re-enables launches and lets
    /// the metric signal again.
    pub fn acknowledge_signal(&self, signal_id: &str, actor: &ActorId, note: &str) -> KernelResult<JournalRecord> {
        let role = self.require_actor(actor)?.role;
        if !role.is_human() {
            return Err(KernelError::Unauthorized(format!("{role} may not acknowledge anomalies")));
        }
        let kind = {
            let mut signals = self.signals.lock();
            let state = signals
                .get_mut(signal_id)
                .ok_or_else(|| KernelError::UnknownSignal(signal_id.to_owned()))?;
            if state.acknowledged {
                return Err(KernelError::AlreadyHandled(signal_id.to_owned()));
            }
            state.acknowledged = true;
            state.signal.agent_kind.clone()
        };
        let mut fx = Effects::default();
        let payload = Payload::Anomaly(AnomalyPayload::Acknowledged {
            signal_id: signal_id.to_owned(),
            note: note.to_owned(),
        });
        let record = match self.append(&mut fx, &kind_stream(&kind), actor, &payload) {
            Ok(r) => r,
            Err(e) => {
                if let Some(state) = self.signals.lock().get_mut(signal_id) {
                    state.acknowledged = false;
                }
                return Err(e);
            }
        };
        self.sentinel.acknowledge(&kind, signal_id);
        Ok(record)
    }
}
