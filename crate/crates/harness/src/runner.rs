//! Runs one scripted agent against the kernel, one step at a time, through
//! the kernel's public operations only.

use agentgov_core::hitl::ResolutionRequest;
use agentgov_core::journal::payload::DecisionPayload;
use agentgov_core::kernel::{ActionOutcome, ExecutionOutcome};
use agentgov_core::{
    ActionDescriptor, ActorId, AgentConfig, Directive, KernelError, LifecycleState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::env::{self, HarnessEnv};
use crate::fault::{Fault, FaultError};
use crate::resolver::AutoResolver;
use crate::script::{ScenarioScript, Step};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario {script} is stuck: checkpoint {checkpoint_id} on {instance_id} is unresolved and there is no resolver")]
    ScenarioStuck {
        script: String,
        instance_id: String,
        checkpoint_id: String,
    },
    #[error("unknown script '{0}'")]
    UnknownScript(String),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("kernel refused {op} on {instance_id}: {source}")]
    Kernel {
        op: &'static str,
        instance_id: String,
        #[source]
        source: KernelError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub decisions: u64,
    pub actions: u64,
    pub checkpoints: u64,
    pub executed: u64,
    pub errors: u64,
    pub denied: u64,
    pub blocked: u64,
    /// The kernel stopped the run (suspension, abort, blocked launch).
    pub interrupted: bool,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub script: String,
    pub agent_kind: String,
    /// The instance's journal stream.
    pub instance_id: String,
    pub final_state: LifecycleState,
    pub records: usize,
    pub metrics: RunMetrics,
}

/// Per-agent random stream: `seed` picks the run, `index` the agent in it.
pub fn agent_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One scripted agent in flight.
pub struct AgentRun {
    index: u64,
    script: ScenarioScript,
    rng: ChaCha8Rng,
    owner: ActorId,
    instance_id: Option<String>,
    cursor: usize,
    done: bool,
    metrics: RunMetrics,
}

impl AgentRun {
    pub fn new(script: ScenarioScript, seed: u64, index: u64) -> Self {
        Self {
            index,
            script,
            rng: agent_rng(seed, index),
            owner: env::agent(index),
            instance_id: None,
            cursor: 0,
            done: false,
            metrics: RunMetrics::default(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn instance_id(&self) -> Option<&str> {
        self.instance_id.as_deref()
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    pub fn outcome(&self, env: &HarnessEnv) -> ScenarioOutcome {
        let id = self.instance_id.clone().unwrap_or_default();
        let final_state = env
            .kernel
            .instance(&id)
            .map(|i| i.state)
            .unwrap_or(LifecycleState::Initiated);
        ScenarioOutcome {
            script: self.script.name.clone(),
            agent_kind: self.script.agent_kind.clone(),
            records: env.kernel.journal().stream_len(&id).unwrap_or(0),
            instance_id: id,
            final_state,
            metrics: self.metrics.clone(),
        }
    }

    /// Runs until the script ends or the kernel stops the instance.
    pub fn run(&mut self, env: &HarnessEnv, resolver: Option<&AutoResolver>) -> Result<(), HarnessError> {
        while !self.done {
            self.step(env, resolver)?;
        }
        Ok(())
    }

    /// Performs the next step. The first step creates and launches the
    /// instance.
    pub fn step(&mut self, env: &HarnessEnv, resolver: Option<&AutoResolver>) -> Result<(), HarnessError> {
        if self.done {
            return Ok(());
        }
        env.clock.advance(self.rng.random_range(10..=100));
        let Some(id) = self.instance_id.clone() else {
            return self.start(env);
        };
        let Some(step) = self.script.steps.get(self.cursor).cloned() else {
            self.done = true;
            return Ok(());
        };
        self.cursor += 1;
        let k = &env.kernel;
        let result = match step {
            Step::Progress { name, detail } => k.report_progress(&id, &self.owner, &name, &detail).map(drop),
            Step::Decision(d) => {
                self.metrics.decisions += 1;
                let scoped = |xs: &[String]| xs.iter().map(|a| format!("{id}/{a}")).collect();
                let payload = DecisionPayload {
                    decision_id: String::new(),
                    data_sources_consulted: d.data_sources.clone(),
                    constraints_considered: d.constraints.clone(),
                    alternatives: d.alternatives.clone(),
                    chosen: d.chosen.clone(),
                    rationale: d.rationale.clone(),
                    confidence: d.confidence,
                    produced_artifacts: scoped(&d.produces),
                    consumed_artifacts: scoped(&d.consumes),
                    checkpoint_id: None,
                };
                k.record_decision(&id, &self.owner, payload).map(drop)
            }
            Step::Action(a) => return self.act(env, resolver, &id, a),
            Step::Finish { summary } => {
                self.done = true;
                k.finish(&id, &self.owner, &summary).map(drop)
            }
            Step::Fail { reason } => {
                self.done = true;
                k.report_progress(&id, &self.owner, "fail", &reason)
                    .and_then(|_| k.abort(&id, &ActorId::new(env::OPERATOR), &reason))
                    .map(drop)
            }
        };
        result.or_else(|e| self.interrupted(env, "step", &id, e))
    }

    fn start(&mut self, env: &HarnessEnv) -> Result<(), HarnessError> {
        let s = &self.script;
        let config = AgentConfig {
            agent_kind: s.agent_kind.clone(),
            scope: format!("{} run {}", s.name, self.index),
            context: Default::default(),
            objectives: vec![format!("complete {}", s.name)],
            data_sources: vec![],
            risk_class_default: s.risk_default,
            owner: self.owner.clone(),
        };
        let inst = env
            .kernel
            .create_instance(config, &ActorId::new(env::OPERATOR))
            .map_err(|source| HarnessError::Kernel {
                op: "create",
                instance_id: String::new(),
                source,
            })?;
        let id = inst.instance_id;
        self.instance_id = Some(id.clone());
        match env.kernel.launch(&id, &self.owner) {
            Ok(_) => Ok(()),
            Err(e) => self.interrupted(env, "launch", &id, e),
        }
    }

    /// A refused call ends the run when the instance is no longer Active
    /// (the sentinel or a timeout got there first); anything else is a bug.
    fn interrupted(&mut self, env: &HarnessEnv, op: &'static str, id: &str, e: KernelError) -> Result<(), HarnessError> {
        let state = env.kernel.instance(id).map(|i| i.state);
        if matches!(state, Ok(s) if s != LifecycleState::Active) {
            self.done = true;
            self.metrics.interrupted = true;
            tracing::debug!(instance_id = id, op, error = %e, "run interrupted");
            return Ok(());
        }
        Err(HarnessError::Kernel {
            op,
            instance_id: id.to_owned(),
            source: e,
        })
    }

    fn error_rate(&self, env: &HarnessEnv) -> f64 {
        let mut rate = self.script.error_rate;
        for f in &self.script.faults {
            if let Fault::ErrorBurst { rate: r, onset } = f {
                let active = onset.is_none_or(|at| env.kernel.sentinel().ingested(&self.script.agent_kind) >= at);
                if active {
                    rate = *r;
                }
            }
        }
        rate
    }

    fn stalls(&self) -> bool {
        self.script.faults.contains(&Fault::Stall) && !self.metrics.stalled
    }

    fn act(
        &mut self,
        env: &HarnessEnv,
        resolver: Option<&AutoResolver>,
        id: &str,
        a: crate::script::ActionStep,
    ) -> Result<(), HarnessError> {
        let k = &env.kernel;
        self.metrics.actions += 1;
        let desc = ActionDescriptor {
            instance_id: id.to_owned(),
            action_id: None,
            action_kind: a.kind.clone(),
            description: a.description.clone(),
            risk_class: Some(a.risk),
            confidence: a.confidence,
            payload_preview: a.preview.clone(),
        };
        let outcome = match k.report_action(&self.owner, desc) {
            Ok(o) => o,
            Err(e) => return self.interrupted(env, "report_action", id, e),
        };
        let action_id = outcome.action_id().to_owned();
        match outcome {
            ActionOutcome::Proceed { .. } | ActionOutcome::ProceedWithNotify { .. } => {}
            ActionOutcome::Blocked { .. } => {
                self.metrics.blocked += 1;
                let r = k.report_progress(id, &self.owner, "replan", &format!("{} was blocked", a.kind));
                return r.map(drop).or_else(|e| self.interrupted(env, "replan", id, e));
            }
            ActionOutcome::Checkpoint { checkpoint_id, .. } => {
                self.metrics.checkpoints += 1;
                if self.stalls() {
                    self.metrics.stalled = true;
                    self.done = true;
                    let due = k.checkpoint(&checkpoint_id).map(|c| c.due_at()).unwrap_or(0);
                    if env.now() < due {
                        env.clock.set(due);
                    }
                    k.expire_due_checkpoints(env.now());
                    return Ok(());
                }
                let Some(resolver) = resolver else {
                    return Err(HarnessError::ScenarioStuck {
                        script: self.script.name.clone(),
                        instance_id: id.to_owned(),
                        checkpoint_id,
                    });
                };
                let directive = resolver.directive(a.risk);
                env.clock.advance(resolver.delay_for((self.index << 20) | self.cursor as u64));
                let who = if directive == Directive::Abort { env::OPERATOR } else { env::APPROVER };
                let modification = (directive == Directive::ProceedWithModification)
                    .then(|| [("adjusted_by".to_owned(), json!("reviewer"))].into_iter().collect());
                let req = ResolutionRequest {
                    directive,
                    modification,
                    note: format!("auto resolver: {}", directive.as_str()),
                };
                if let Err(e) = k.resolve_checkpoint(&checkpoint_id, req, &ActorId::new(who)) {
                    return self.interrupted(env, "resolve", id, e);
                }
                match directive {
                    Directive::Proceed | Directive::ProceedWithModification => {}
                    Directive::DenyAndReplan => {
                        self.metrics.denied += 1;
                        let r = k.report_progress(id, &self.owner, "replan", &format!("{} was denied", a.kind));
                        return r.map(drop).or_else(|e| self.interrupted(env, "replan", id, e));
                    }
                    Directive::Abort => {
                        self.done = true;
                        return Ok(());
                    }
                }
            }
        }
        let failed = a.effect && {
            let rate = self.error_rate(env);
            self.rng.random_bool(rate)
        };
        let (result, detail) = if failed {
            (ExecutionOutcome::Error, format!("{} failed", a.kind))
        } else {
            (ExecutionOutcome::Executed, format!("{} done", a.kind))
        };
        match k.report_execution(id, &self.owner, &action_id, result, &detail) {
            Ok(_) => {
                if failed {
                    self.metrics.errors += 1;
                } else {
                    self.metrics.executed += 1;
                }
                Ok(())
            }
            Err(e) => self.interrupted(env, "report_execution", id, e),
        }
    }
}

/// Runs `script` as agent 0 of `seed`.
pub fn run_scenario(
    env: &HarnessEnv,
    script: &ScenarioScript,
    seed: u64,
    resolver: Option<&AutoResolver>,
) -> Result<ScenarioOutcome, HarnessError> {
    let mut run = AgentRun::new(script.clone(), seed, 0);
    run.run(env, resolver)?;
    Ok(run.outcome(env))
}
