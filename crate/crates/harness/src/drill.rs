//! Sentinel drills: an error burst that must be contained quickly, and a long
//! fault-free run that must stay quiet.

use agentgov_core::journal::kind_stream;
use agentgov_core::journal::payload::AnomalyPayload;
use agentgov_core::{ActorId, LifecycleState};
use serde::{Deserialize, Serialize};

use crate::env::{self, HarnessEnv};
use crate::fault::{inject_fault, Fault};
use crate::resolver::AutoResolver;
use crate::runner::{AgentRun, HarnessError};
use crate::script::{self, ScenarioScript};

pub const DRILL_KIND: &str = "collection_letter";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillSpec {
    pub seed: u64,
    /// Instances kept running at once.
    pub concurrency: usize,
    pub letters: usize,
    pub base_error_rate: f64,
}

impl Default for DrillSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            concurrency: 8,
            letters: 12,
            base_error_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstReport {
    pub onset: u64,
    pub burst_rate: f64,
    /// Kind events ingested before the signal record, counted from onset.
    pub latency_events: Option<u64>,
    pub signal_id: Option<String>,
    /// Instances live when the fallback ran; all of them must be Suspended.
    pub contained: Vec<String>,
    pub all_suspended: bool,
    pub live_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuietReport {
    pub events: u64,
    pub signals: Vec<String>,
}

fn drill_script(spec: &DrillSpec) -> ScenarioScript {
    let mut s = script::collection_letter(spec.letters);
    s.error_rate = spec.base_error_rate;
    s
}

/// Keeps `concurrency` drill instances going until `stop` says so or the kind
/// refuses new launches.
fn drive(
    env: &HarnessEnv,
    spec: &DrillSpec,
    script: &ScenarioScript,
    resolver: &AutoResolver,
    mut stop: impl FnMut(&HarnessEnv) -> bool,
) -> Result<(), HarnessError> {
    let mut runs: Vec<AgentRun> = Vec::new();
    let mut next = 0u64;
    while !stop(env) {
        runs.retain(|r| !r.is_done());
        while runs.len() < spec.concurrency {
            runs.push(AgentRun::new(script.clone(), spec.seed, next));
            next += 1;
        }
        for r in runs.iter_mut() {
            r.step(env, Some(resolver))?;
            if stop(env) {
                break;
            }
        }
    }
    Ok(())
}

/// Runs at the base rate until `onset` kind events, then at `burst_rate`,
/// and stops once the sentinel has signalled or `onset + budget` events pass.
pub fn burst_drill(spec: &DrillSpec, onset: u64, burst_rate: f64, budget: u64) -> Result<BurstReport, HarnessError> {
    let env = HarnessEnv::new(spec.seed);
    let script = inject_fault(
        &drill_script(spec),
        Fault::ErrorBurst {
            rate: burst_rate,
            onset: Some(onset),
        },
    )?;
    let resolver = AutoResolver::approve_all(spec.seed);
    let limit = onset + budget;
    drive(&env, spec, &script, &resolver, |e| {
        e.kernel.open_signal_for(DRILL_KIND).is_some() || e.kernel.sentinel().ingested(DRILL_KIND) >= limit
    })?;

    let signal_id = env.kernel.open_signal_for(DRILL_KIND);
    let mut latency_events = None;
    let mut contained = Vec::new();
    if let Some(id) = &signal_id {
        let stream = kind_stream(DRILL_KIND);
        let mut before = 0u64;
        for r in env.kernel.journal().all_records() {
            if r.instance_id == stream {
                if matches!(r.anomaly(), Some(AnomalyPayload::Signal(s)) if &s.signal_id == id) {
                    latency_events = Some(before.saturating_sub(onset));
                    break;
                }
            } else if env.kernel.instance_kind(&r.instance_id).as_deref() == Some(DRILL_KIND) {
                before += 1;
            }
        }
        if let Ok(s) = env.kernel.signal(id) {
            contained = s.fallback.map(|f| f.suspended_instances).unwrap_or_default();
        }
    }
    let state = |id: &str| env.kernel.instance(id).map(|i| i.state).ok();
    let all_suspended = !contained.is_empty() && contained.iter().all(|id| state(id) == Some(LifecycleState::Suspended));
    let live_after = env
        .kernel
        .instances(None)
        .iter()
        .filter(|i| i.config.agent_kind == DRILL_KIND && i.state.is_live())
        .count();
    Ok(BurstReport {
        onset,
        burst_rate,
        latency_events,
        signal_id,
        contained,
        all_suspended,
        live_after,
    })
}

/// Runs `events` kind events with no fault. Every signal is a false positive;
/// it is acknowledged so the run can go on.
pub fn quiet_drill(spec: &DrillSpec, events: u64) -> Result<QuietReport, HarnessError> {
    let env = HarnessEnv::new(spec.seed);
    let script = drill_script(spec);
    let resolver = AutoResolver::approve_all(spec.seed);
    let op = ActorId::new(env::OPERATOR);
    let mut signals = Vec::new();
    drive(&env, spec, &script, &resolver, |e| {
        if let Some(id) = e.kernel.open_signal_for(DRILL_KIND) {
            let _ = e.kernel.acknowledge_signal(&id, &op, "drill: false positive");
            signals.push(id);
        }
        e.kernel.sentinel().ingested(DRILL_KIND) >= events
    })?;
    Ok(QuietReport {
        events: env.kernel.sentinel().ingested(DRILL_KIND),
        signals,
    })
}
