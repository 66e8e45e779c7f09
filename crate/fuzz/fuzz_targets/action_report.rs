#![no_main]

use agentgov_core::{ActionDescriptor, ActorId, AgentConfig, RiskClass};
use agentgov_harness::{env, HarnessEnv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(mut action) = serde_json::from_slice::<ActionDescriptor>(data) else { return };
    let h = HarnessEnv::new(0);
    let agent = env::agent(0);
    let cfg = AgentConfig {
        agent_kind: "payment".into(),
        scope: "fuzz".into(),
        context: Default::default(),
        objectives: vec!["fuzz".into()],
        data_sources: vec![],
        risk_class_default: RiskClass::Low,
        owner: agent.clone(),
    };
    let id = h.kernel.create_instance(cfg, &ActorId::new(env::OPERATOR)).unwrap().instance_id;
    h.kernel.launch(&id, &agent).unwrap();
    // Half the inputs aim at the live instance so they get past the lookup.
    if data.len() % 2 == 0 {
        action.instance_id = id.clone();
    }
    let before = h.kernel.journal().len();
    if h.kernel.report_action(&agent, action).is_err() {
        assert_eq!(h.kernel.journal().len(), before, "a rejected report must not journal");
    }
    assert_eq!(h.kernel.journal().replay_state(&id).unwrap(), h.kernel.live_state(&id).unwrap());
});
