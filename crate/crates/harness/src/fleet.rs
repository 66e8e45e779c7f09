//! Seeded fleets of scripted agents and the invariant checks run over their
//! journal afterwards.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use agentgov_core::audit::{autonomy_violations, gate_violations, Violation};
use agentgov_core::journal::is_kind_stream;
use agentgov_core::{ActorId, LifecycleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, HarnessEnv};
use crate::fault::{inject_fault, FaultError, FaultSpec};
use crate::resolver::AutoResolver;
use crate::runner::{AgentRun, HarnessError, ScenarioOutcome};
use crate::script::{self, ScenarioScript, Step};

/// Which scripts a fleet draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMix {
    /// Built-in scripts by name, drawn uniformly.
    Builtin(Vec<String>),
    /// Random scripts over the standard kinds.
    Random,
}

impl ScriptMix {
    pub fn all_builtin() -> Self {
        ScriptMix::Builtin(script::SCRIPTS.iter().map(|s| (*s).to_owned()).collect())
    }

    pub fn single(name: &str) -> Self {
        ScriptMix::Builtin(vec![name.to_owned()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub n: usize,
    pub mix: ScriptMix,
    pub seed: u64,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Try one autonomy promotion per kind after the run.
    #[serde(default)]
    pub promote: bool,
    /// New agents started per round. Staggered starts keep each kind's
    /// record mix steady; starting everyone at once front-loads a baseline
    /// of lifecycle records with no errors in it.
    #[serde(default = "default_admit")]
    pub admit_per_round: usize,
}

fn default_admit() -> usize {
    DEFAULT_ADMIT_PER_ROUND
}

pub const DEFAULT_ADMIT_PER_ROUND: usize = 4;

impl FleetSpec {
    pub fn new(n: usize, mix: ScriptMix, seed: u64) -> Self {
        Self {
            n,
            mix,
            seed,
            faults: vec![],
            promote: false,
            admit_per_round: DEFAULT_ADMIT_PER_ROUND,
        }
    }
}

/// Per-kind counts over the fleet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSummary {
    pub instances: u64,
    pub finished: u64,
    pub aborted: u64,
    pub suspended: u64,
    pub live: u64,
    /// Created but never launched, e.g. while the kind was blocked.
    pub initiated: u64,
    pub records: u64,
    pub checkpoints: u64,
    pub executed: u64,
    pub errors: u64,
    pub signals: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetResult {
    pub per_kind: BTreeMap<String, KindSummary>,
    pub gate_violations: Vec<Violation>,
    pub autonomy_violations: Vec<Violation>,
    /// Every broken invariant, described.
    pub invariant_failures: Vec<String>,
    pub outcomes: Vec<ScenarioOutcome>,
    pub journal_records: usize,
    pub wall_time: Duration,
}

impl FleetResult {
    pub fn is_clean(&self) -> bool {
        self.invariant_failures.is_empty()
    }
}

/// The script agent `index` of a fleet runs, faults applied. Drawn from its
/// own random stream so the choice never depends on the fleet size.
pub fn fleet_script(spec: &FleetSpec, index: u64) -> Result<ScenarioScript, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5C81_9715_0000_0000);
    rng.set_stream(index);
    let mut s = match &spec.mix {
        ScriptMix::Random => script::random_script(&mut rng),
        ScriptMix::Builtin(names) => {
            if names.is_empty() {
                return Err(HarnessError::UnknownScript(String::new()));
            }
            let name = &names[rng.random_range(0..names.len())];
            script::builtin(name, &mut rng).ok_or_else(|| HarnessError::UnknownScript(name.clone()))?
        }
    };
    for f in &spec.faults {
        if !f.applies_to(&s.agent_kind) {
            continue;
        }
        match inject_fault(&s, f.fault.clone()) {
            Ok(faulty) => s = faulty,
            // An untargeted fault skips scripts it cannot touch.
            Err(FaultError::Inapplicable { .. }) if f.kind.is_none() && spec.n > 1 => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(s)
}

pub fn run_fleet(env: &HarnessEnv, spec: &FleetSpec, resolver: Option<&AutoResolver>) -> Result<FleetResult, HarnessError> {
    let started = Instant::now();
    let mut runs = (0..spec.n as u64)
        .map(|i| fleet_script(spec, i).map(|s| AgentRun::new(s, spec.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    for f in &spec.faults {
        let touched = runs.iter().any(|r| r.script().faults.contains(&f.fault) && f.applies_to(&r.script().agent_kind));
        if !touched && spec.n > 0 {
            return Err(FaultError::Inapplicable {
                fault: f.to_string(),
                script: "fleet".into(),
                reason: "no script in the fleet accepts it".into(),
            }
            .into());
        }
    }

    let admit = spec.admit_per_round.max(1);
    let mut admitted = 0;
    let mut round = 0u64;
    loop {
        admitted = (admitted + admit).min(runs.len());
        let mut stepped = false;
        for run in runs[..admitted].iter_mut().filter(|r| !r.is_done()) {
            run.step(env, resolver)?;
            stepped = true;
        }
        if !stepped && admitted == runs.len() {
            break;
        }
        round += 1;
    }
    tracing::info!(n = spec.n, rounds = round, records = env.kernel.journal().len(), "fleet finished");

    if spec.promote {
        promote_kinds(env);
    }

    let outcomes: Vec<ScenarioOutcome> = runs.iter().map(|r| r.outcome(env)).collect();
    let mut per_kind: BTreeMap<String, KindSummary> = BTreeMap::new();
    for o in &outcomes {
        let k = per_kind.entry(o.agent_kind.clone()).or_default();
        k.instances += 1;
        match o.final_state {
            LifecycleState::Finished => k.finished += 1,
            LifecycleState::Aborted => k.aborted += 1,
            LifecycleState::Suspended => k.suspended += 1,
            LifecycleState::Initiated => k.initiated += 1,
            LifecycleState::Active | LifecycleState::AwaitingHuman => k.live += 1,
        }
        k.records += o.records as u64;
        k.checkpoints += o.metrics.checkpoints;
        k.executed += o.metrics.executed;
        k.errors += o.metrics.errors;
    }
    for s in env.kernel.signals() {
        per_kind.entry(s.signal.agent_kind.clone()).or_default().signals += 1;
    }

    let records = env.kernel.journal().all_records();
    let gate = gate_violations(&records);
    let autonomy = autonomy_violations(&records, |id| env.kernel.role_of(id));
    let mut failures = check_invariants(env, &runs);
    failures.extend(gate.iter().map(|v| format!("gate violation at {:?}: {}", v.record, v.reason)));
    failures.extend(autonomy.iter().map(|v| format!("autonomy violation at {:?}: {}", v.record, v.reason)));
    failures.extend(check_isolation(env, spec, &per_kind));

    Ok(FleetResult {
        per_kind,
        gate_violations: gate,
        autonomy_violations: autonomy,
        invariant_failures: failures,
        outcomes,
        journal_records: records.len(),
        wall_time: started.elapsed(),
    })
}

/// One promotion attempt per kind: an operator asks, an approver approves.
/// Ineligible kinds are refused by the kernel and left alone.
fn promote_kinds(env: &HarnessEnv) {
    let k = &env.kernel;
    let op = ActorId::new(env::OPERATOR);
    let appr = ActorId::new(env::APPROVER);
    for policy in k.kinds() {
        let Some(to) = policy.level.up() else { continue };
        match k.request_change(&policy.name, to, &op, "fleet promotion pass") {
            Ok(c) => {
                if let Err(e) = k.approve_change(&c.change.change_id, &appr) {
                    tracing::debug!(kind = %policy.name, error = %e, "promotion not approved");
                }
            }
            Err(e) => tracing::debug!(kind = %policy.name, error = %e, "promotion refused"),
        }
    }
}

/// Chain integrity, replay equivalence, record linearity, and no instance
/// left running by a script that ends.
fn check_invariants(env: &HarnessEnv, runs: &[AgentRun]) -> Vec<String> {
    let journal = env.kernel.journal();
    let streams = journal.stream_names();
    let mut failures: Vec<String> = streams
        .par_iter()
        .filter_map(|s| {
            match journal.verify_chain(s) {
                Ok(st) if st.is_valid() => {}
                Ok(st) => return Some(format!("stream {s} fails verification: {st:?}")),
                Err(e) => return Some(format!("stream {s}: {e}")),
            }
            if is_kind_stream(s) {
                return None;
            }
            match (journal.replay_state(s), env.kernel.live_state(s)) {
                (Ok(r), Ok(l)) if r == l => None,
                (Ok(r), Ok(l)) => Some(format!("replay of {s} gives {r:?}, live is {l:?}")),
                (Err(e), _) => Some(format!("replay of {s}: {e}")),
                (_, Err(e)) => Some(format!("live state of {s}: {e}")),
            }
        })
        .collect();

    let total: usize = streams.iter().map(|s| journal.stream_len(s).unwrap_or(0)).sum();
    if total != journal.len() {
        failures.push(format!("stream lengths sum to {total}, journal holds {}", journal.len()));
    }

    for run in runs {
        let Some(id) = run.instance_id() else { continue };
        let ends = run
            .script()
            .steps
            .iter()
            .any(|s| matches!(s, Step::Finish { .. } | Step::Fail { .. }));
        let state = env.kernel.instance(id).map(|i| i.state);
        if ends && matches!(state, Ok(s) if s.is_live()) {
            failures.push(format!("{id} ({}) left {:?} by a script that ends", run.script().name, state));
        }
    }
    failures.sort();
    failures
}

/// With a kind-targeted fault: the faulted kind must have signalled and have
/// nothing left running; every other kind must be untouched by the sentinel.
fn check_isolation(env: &HarnessEnv, spec: &FleetSpec, per_kind: &BTreeMap<String, KindSummary>) -> Vec<String> {
    let mut out = Vec::new();
    let targeted: Vec<&str> = spec.faults.iter().filter_map(|f| f.kind.as_deref()).collect();
    if targeted.is_empty() {
        return out;
    }
    let sentinel = ActorId::sentinel();
    let records = env.kernel.journal().all_records();
    for (kind, summary) in per_kind {
        let faulted = targeted.contains(&kind.as_str());
        let bursts = spec
            .faults
            .iter()
            .any(|f| f.kind.as_deref() == Some(kind) && matches!(f.fault, crate::fault::Fault::ErrorBurst { .. }));
        if faulted && bursts {
            if summary.signals == 0 {
                out.push(format!("faulted kind {kind} raised no anomaly signal"));
            }
            if summary.live > 0 {
                out.push(format!("faulted kind {kind} still has {} live instances", summary.live));
            }
        } else if !faulted {
            if summary.signals > 0 {
                out.push(format!("unfaulted kind {kind} raised {} signals", summary.signals));
            }
            let hit = records.iter().any(|r| {
                r.actor == sentinel
                    && env.kernel.instance_kind(&r.instance_id).as_deref() == Some(kind.as_str())
            });
            if hit {
                out.push(format!("sentinel touched an instance of unfaulted kind {kind}"));
            }
        }
    }
    out
}
