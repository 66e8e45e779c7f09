use std::path::PathBuf;

use agentgov_core::{ActionDescriptor, ActorId, AgentConfig, RiskClass};
use agentgov_harness::{env, FaultSpec, HarnessEnv};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn fault_spec_seeds_round_trip() {
    for (name, bytes) in seeds("fault_spec") {
        let text = String::from_utf8(bytes).unwrap();
        match text.parse::<FaultSpec>() {
            Ok(spec) => assert_eq!(spec.to_string().parse::<FaultSpec>().unwrap(), spec, "{name}"),
            Err(_) => assert_eq!(name, "seed-bad"),
        }
    }
}

#[test]
fn action_report_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("action_report") {
        let action: ActionDescriptor = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
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
        let before = h.kernel.journal().len();
        match h.kernel.report_action(&agent, action) {
            Ok(_) => accepted += 1,
            Err(e) => {
                assert!(matches!(name.as_str(), "seed-bad-confidence" | "seed-unknown-instance"), "{name}: {e}");
                assert_eq!(h.kernel.journal().len(), before, "{name}");
            }
        }
        assert_eq!(h.kernel.journal().replay_state(&id).unwrap(), h.kernel.live_state(&id).unwrap());
    }
    assert_eq!(accepted, 3);
}
