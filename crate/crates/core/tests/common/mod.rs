//! Randomized kernel sessions shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use agentgov_core::hitl::{GatePolicy, ResolutionRequest};
use agentgov_core::journal::payload::DecisionPayload;
use agentgov_core::kernel::{ActionOutcome, ExecutionOutcome};
use agentgov_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const START: Millis = 1_700_000_000_000;

pub struct Session {
    pub kernel: Kernel,
    pub clock: Arc<ManualClock>,
    pub agents: Vec<ActorId>,
}

pub fn actor(id: &str) -> ActorId {
    ActorId::new(id)
}

pub fn base_kernel(cfg: KernelConfig) -> Session {
    let clock = Arc::new(ManualClock::new(START));
    let kernel = Kernel::new(cfg, clock.clone());
    for (id, role) in [("admin", Role::Admin), ("op", Role::Operator), ("appr", Role::Approver)] {
        kernel.register_actor(Actor::new(id, role, Some(format!("tok-{id}"))));
    }
    let agents: Vec<ActorId> = (1..=3)
        .map(|i| {
            let id = format!("agent-{i}");
            kernel.register_actor(Actor::new(id.clone(), Role::Agent, Some(format!("tok-{id}"))));
            ActorId::new(id)
        })
        .collect();
    let admin = actor("admin");
    kernel
        .register_kind(AgentKindPolicy::new("alpha", AutonomyLevel::Assisted), &admin)
        .unwrap();
    kernel
        .register_kind(AgentKindPolicy::new("beta", AutonomyLevel::Supervised), &admin)
        .unwrap();
    let mut gamma = AgentKindPolicy::new("gamma", AutonomyLevel::FullWithGovernance);
    gamma.gate = GatePolicy {
        allowed_action_kinds: Some(BTreeSet::from(["read".to_owned(), "write".to_owned()])),
        ..GatePolicy::default()
    };
    gamma.spot_check_rate = 0.25;
    kernel.register_kind(gamma, &admin).unwrap();
    Session { kernel, clock, agents }
}

pub fn config(kind: &str, owner: &ActorId, risk: RiskClass) -> AgentConfig {
    AgentConfig {
        agent_kind: kind.into(),
        scope: format!("{kind} work"),
        context: Default::default(),
        objectives: vec!["finish the task".into()],
        data_sources: vec!["crm".into()],
        risk_class_default: risk,
        owner: owner.clone(),
    }
}

const KINDS: [&str; 3] = ["alpha", "beta", "gamma"];
const ACTIONS: [&str; 4] = ["read", "write", "send", "pay"];
const RISKS: [RiskClass; 4] = [RiskClass::Low, RiskClass::Medium, RiskClass::High, RiskClass::Critical];
const DIRECTIVES: [Directive; 4] = [
    Directive::Proceed,
    Directive::ProceedWithModification,
    Directive::DenyAndReplan,
    Directive::Abort,
];

/// Drives `steps` random operations. Operations that the kernel refuses are
/// skipped; the refusal itself is part of what is being exercised.
pub fn random_session(seed: u64, steps: usize) -> Session {
    let s = base_kernel(KernelConfig {
        spot_check_seed: seed,
        ..KernelConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = &s.kernel;
    let mut pending_exec: Vec<(String, ActorId, String)> = Vec::new();
    let mut artifacts: Vec<String> = Vec::new();

    for _ in 0..steps {
        s.clock.advance(rng.random_range(1..120_000));
        let instances = k.instances(None);
        let pick = |rng: &mut ChaCha8Rng| -> Option<AgentInstance> {
            (!instances.is_empty()).then(|| instances[rng.random_range(0..instances.len())].clone())
        };
        match rng.random_range(0..100) {
            0..=9 => {
                let owner = s.agents[rng.random_range(0..s.agents.len())].clone();
                let kind = KINDS[rng.random_range(0..KINDS.len())];
                let risk = RISKS[rng.random_range(0..3)];
                let _ = k.create_instance(config(kind, &owner, risk), &actor("op"));
            }
            10..=19 => {
                if let Some(i) = pick(&mut rng) {
                    let _ = k.launch(&i.instance_id, &i.config.owner);
                }
            }
            20..=44 => {
                if let Some(i) = pick(&mut rng) {
                    let desc = ActionDescriptor {
                        instance_id: i.instance_id.clone(),
                        action_id: None,
                        action_kind: ACTIONS[rng.random_range(0..ACTIONS.len())].into(),
                        description: "step".into(),
                        risk_class: rng.random_bool(0.7).then(|| RISKS[rng.random_range(0..4)]),
                        confidence: rng.random_range(0.4..1.0),
                        payload_preview: Default::default(),
                    };
                    if let Ok(out) = k.report_action(&i.config.owner, desc) {
                        if !matches!(out, ActionOutcome::Blocked { .. }) {
                            pending_exec.push((i.instance_id.clone(), i.config.owner.clone(), out.action_id().to_owned()));
                        }
                    }
                }
            }
            45..=59 => {
                if !pending_exec.is_empty() {
                    let (inst, owner, action) = pending_exec.swap_remove(rng.random_range(0..pending_exec.len()));
                    let outcome = if rng.random_bool(0.1) { ExecutionOutcome::Error } else { ExecutionOutcome::Executed };
                    if k.report_execution(&inst, &owner, &action, outcome, "done").is_err() && rng.random_bool(0.5) {
                        pending_exec.push((inst, owner, action));
                    }
                }
            }
            60..=71 => {
                let open = k.checkpoints(Some(agentgov_core::hitl::CheckpointStatus::Pending));
                if !open.is_empty() {
                    let cp = &open[rng.random_range(0..open.len())];
                    let directive = DIRECTIVES[rng.random_range(0..4)];
                    let modification = (directive == Directive::ProceedWithModification)
                        .then(|| [("amount".to_owned(), serde_json::json!(10))].into_iter().collect());
                    let who = if rng.random_bool(0.5) { "appr" } else { "op" };
                    let _ = k.resolve_checkpoint(
                        &cp.checkpoint_id,
                        ResolutionRequest { directive, modification, note: "reviewed".into() },
                        &actor(who),
                    );
                }
            }
            72..=75 => {
                let big = s.clock.advance(rng.random_range(0..1_200_000));
                k.expire_due_checkpoints(big);
            }
            76..=79 => {
                if let Some(i) = pick(&mut rng) {
                    let _ = k.suspend(&i.instance_id, &actor("op"), "pause");
                }
            }
            80..=84 => {
                if let Some(i) = pick(&mut rng) {
                    let _ = k.resume(&i.instance_id, &actor("op"), "go on");
                }
            }
            85..=87 => {
                if let Some(i) = pick(&mut rng) {
                    let _ = k.abort(&i.instance_id, &actor("admin"), "stop");
                }
            }
            88..=93 => {
                if let Some(i) = pick(&mut rng) {
                    let _ = k.finish(&i.instance_id, &i.config.owner, "summary");
                }
            }
            _ => {
                if let Some(i) = pick(&mut rng) {
                    let consumed: Vec<String> = artifacts
                        .iter()
                        .filter(|_| rng.random_bool(0.3))
                        .take(3)
                        .cloned()
                        .collect();
                    let produced = format!("art-{}", artifacts.len() + 1);
                    let constraints: Vec<String> = ["budget", "consent", "tone"]
                        .iter()
                        .filter(|_| rng.random_bool(0.5))
                        .map(|c| (*c).to_owned())
                        .collect();
                    let d = DecisionPayload {
                        decision_id: String::new(),
                        data_sources_consulted: vec!["crm".into()],
                        constraints_considered: constraints,
                        alternatives: vec!["a".into(), "b".into()],
                        chosen: "a".into(),
                        rationale: "cheaper".into(),
                        confidence: 0.8,
                        produced_artifacts: vec![produced.clone()],
                        consumed_artifacts: consumed,
                        checkpoint_id: None,
                    };
                    if k.record_decision(&i.instance_id, &i.config.owner, d).is_ok() {
                        artifacts.push(produced);
                    }
                }
            }
        }
    }
    s
}
