//! The in-process kernel a harness run drives, with its actors and kinds.

use std::sync::Arc;

use agentgov_core::{
    Actor, ActorId, AgentKindPolicy, AutonomyLevel, Kernel, KernelConfig, KernelError, ManualClock, Millis,
    Role,
};

pub const START: Millis = 1_700_000_000_000;
pub const ADMIN: &str = "admin";
pub const OPERATOR: &str = "op";
pub const APPROVER: &str = "appr";
/// Agent actors instances are spread over.
pub const AGENT_POOL: u64 = 16;

pub fn agent(index: u64) -> ActorId {
    ActorId::new(format!("agent-{:02}", index % AGENT_POOL))
}

/// Kinds the built-in scripts run under.
pub fn standard_kinds() -> Vec<AgentKindPolicy> {
    let mut letters = AgentKindPolicy::new("collection_letter", AutonomyLevel::Supervised);
    letters.spot_check_rate = 0.05;
    vec![
        AgentKindPolicy::new("group_email", AutonomyLevel::Collaborative),
        AgentKindPolicy::new("payment", AutonomyLevel::Supervised),
        letters,
        AgentKindPolicy::new("food_order", AutonomyLevel::Supervised),
    ]
}

pub struct HarnessEnv {
    pub kernel: Arc<Kernel>,
    pub clock: Arc<ManualClock>,
}

impl HarnessEnv {
    /// Standard kinds, default kernel settings, spot checks seeded by `seed`.
    pub fn new(seed: u64) -> Self {
        let cfg = KernelConfig {
            spot_check_seed: seed,
            ..KernelConfig::default()
        };
        Self::with_kinds(cfg, standard_kinds()).expect("standard kinds are valid")
    }

    pub fn with_kinds(cfg: KernelConfig, kinds: Vec<AgentKindPolicy>) -> Result<Self, KernelError> {
        let clock = Arc::new(ManualClock::new(START));
        let kernel = Kernel::new(cfg, clock.clone());
        for (id, role) in [(ADMIN, Role::Admin), (OPERATOR, Role::Operator), (APPROVER, Role::Approver)] {
            kernel.register_actor(Actor::new(id, role, None));
        }
        for i in 0..AGENT_POOL {
            kernel.register_actor(Actor::new(agent(i).as_str(), Role::Agent, None));
        }
        let admin = ActorId::new(ADMIN);
        for k in kinds {
            kernel.register_kind(k, &admin)?;
        }
        Ok(Self {
            kernel: Arc::new(kernel),
            clock,
        })
    }

    pub fn now(&self) -> Millis {
        agentgov_core::Clock::now_ms(self.clock.as_ref())
    }
}
