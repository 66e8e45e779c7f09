//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::process::Command;
use std::time::{Duration, Instant};

use agentgov_core::analytics::trace::{find_dropped_constraints, trace_responsibility};
use agentgov_core::analytics::snapshot;
use agentgov_core::clock::DAY_MS;
use agentgov_core::hitl::ResolutionRequest;
use agentgov_core::journal::verify_stream_lines;
use agentgov_core::kernel::ActionOutcome;
use agentgov_core::lifecycle::{validate_transition, TransitionCheck};
use agentgov_core::journal::payload::ProgressStatus;
use agentgov_core::journal::ChainStatus;
use agentgov_core::{
    ActionDescriptor, ActorId, AgentConfig, Directive, EventKind, JournalStore, LifecycleEvent, LifecycleState,
    RecordKind, RiskClass,
};
use agentgov_harness::drill::{burst_drill, quiet_drill, DrillSpec};
use agentgov_harness::env;
use agentgov_harness::fleet::fleet_script;
use agentgov_harness::script::{self, ALLERGY};
use agentgov_harness::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("transition totality", transition_totality),
        ("replay equivalence", replay_equivalence),
        ("tamper evidence", tamper_evidence),
        ("gate soundness", gate_soundness),
        ("spot-check rate", spot_check_rate),
        ("sentinel containment", sentinel_containment),
        ("analytics oracle", analytics_oracle),
        ("scenario fidelity", scenario_fidelity),
        ("fleet scale", fleet_scale),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}. {name}: {} ({:.2}s)",
            i + 1,
            out.detail,
            started.elapsed().as_secs_f64()
        );
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---- 1 ----

const TABLE: [(&str, &str, &str); 13] = [
    ("Initiated", "Launch", "Active"),
    ("Initiated", "Abort", "Aborted"),
    ("Active", "OpenCheckpoint", "AwaitingHuman"),
    ("Active", "Suspend", "Suspended"),
    ("Active", "Abort", "Aborted"),
    ("Active", "Finish", "Finished"),
    ("AwaitingHuman", "ResolveProceed", "Active"),
    ("AwaitingHuman", "ResolveDeny", "Active"),
    ("AwaitingHuman", "CheckpointTimeout", "Suspended"),
    ("AwaitingHuman", "Abort", "Aborted"),
    ("AwaitingHuman", "Suspend", "Suspended"),
    ("Suspended", "Resume", "Active"),
    ("Suspended", "Abort", "Aborted"),
];

fn expected(state: LifecycleState, event: EventKind) -> Option<LifecycleState> {
    TABLE
        .iter()
        .find(|(s, e, _)| *s == state.as_str() && *e == event.as_str())
        .map(|(_, _, t)| LifecycleState::ALL.into_iter().find(|x| x.as_str() == *t).unwrap())
}

struct Probe {
    env: HarnessEnv,
    agent: ActorId,
}

impl Probe {
    fn new() -> Self {
        Probe {
            env: HarnessEnv::new(1),
            agent: env::agent(0),
        }
    }

    fn risky(&self, id: &str) -> ActionDescriptor {
        ActionDescriptor {
            instance_id: id.into(),
            action_id: None,
            action_kind: "pay".into(),
            description: "probe".into(),
            risk_class: Some(RiskClass::High),
            confidence: 0.9,
            payload_preview: Default::default(),
        }
    }

    /// A fresh instance in `state`, with the id of its last checkpoint.
    fn instance_in(&self, state: LifecycleState) -> (String, Option<String>) {
        use LifecycleState::*;
        let k = &self.env.kernel;
        let op = ActorId::new(env::OPERATOR);
        let cfg = AgentConfig {
            agent_kind: "payment".into(),
            scope: "probe".into(),
            context: Default::default(),
            objectives: vec!["probe".into()],
            data_sources: vec![],
            risk_class_default: RiskClass::Low,
            owner: self.agent.clone(),
        };
        let id = k.create_instance(cfg, &op).unwrap().instance_id;
        if state == Initiated {
            return (id, None);
        }
        k.launch(&id, &self.agent).unwrap();
        match state {
            Active => return (id, None),
            Finished => {
                k.finish(&id, &self.agent, "done").unwrap();
                return (id, None);
            }
            _ => {}
        }
        let ActionOutcome::Checkpoint { checkpoint_id, .. } = k.report_action(&self.agent, self.risky(&id)).unwrap() else {
            panic!("High risk at Supervised must open a checkpoint")
        };
        match state {
            Suspended => {
                k.suspend(&id, &op, "probe").unwrap();
            }
            Aborted => {
                k.abort(&id, &op, "probe").unwrap();
            }
            _ => {}
        }
        (id, Some(checkpoint_id))
    }

    /// Raises `event` through whichever public operation carries it.
    fn raise(&self, id: &str, cp: Option<&str>, event: EventKind) -> bool {
        let k = &self.env.kernel;
        let appr = ActorId::new(env::APPROVER);
        let resolve = |d: Directive| match cp {
            Some(cp) => {
                let req = ResolutionRequest {
                    directive: d,
                    modification: None,
                    note: String::new(),
                };
                k.resolve_checkpoint(cp, req, &appr).is_ok()
            }
            None => false,
        };
        match event {
            EventKind::OpenCheckpoint => {
                matches!(k.report_action(&self.agent, self.risky(id)), Ok(ActionOutcome::Checkpoint { .. }))
            }
            EventKind::ResolveProceed => resolve(Directive::Proceed),
            EventKind::ResolveDeny => resolve(Directive::DenyAndReplan),
            EventKind::CheckpointTimeout => {
                let due = self.env.now() + 10 * DAY_MS;
                self.env.clock.set(due);
                k.expire_due_checkpoints(due).iter().any(|(c, _)| Some(c.as_str()) == cp)
            }
            _ => {
                let actor = match event {
                    EventKind::Launch | EventKind::Finish => self.agent.clone(),
                    _ => ActorId::new(env::ADMIN),
                };
                k.apply_event(id, LifecycleEvent::new(event, actor, "probe")).is_ok()
            }
        }
    }
}

fn transition_totality() -> Outcome {
    let started = Instant::now();
    let mut mismatches = Vec::new();
    for s in LifecycleState::ALL {
        for e in EventKind::ALL {
            let table = match validate_transition(s, e) {
                TransitionCheck::Allowed(t) => Some(t),
                TransitionCheck::Denied(_) => None,
            };
            if table != expected(s, e) {
                mismatches.push(format!("table {s}+{e}"));
            }
        }
    }
    let probe = Probe::new();
    for s in LifecycleState::ALL {
        for e in EventKind::ALL {
            let (id, cp) = probe.instance_in(s);
            let len = probe.env.kernel.journal().stream_len(&id).unwrap();
            let accepted = probe.raise(&id, cp.as_deref(), e);
            let now = probe.env.kernel.instance(&id).unwrap().state;
            let ok = match expected(s, e) {
                Some(t) => accepted && now == t,
                None => !accepted && now == s && probe.env.kernel.journal().stream_len(&id).unwrap() == len,
            };
            if !ok {
                mismatches.push(format!("kernel {s}+{e} -> {now} (accepted {accepted})"));
            }
        }
    }
    let took = started.elapsed();
    check(
        mismatches.is_empty() && took < Duration::from_secs(1),
        format!("54 pairs in table and kernel, {} mismatches {:?}, {:?} (< 1s)", mismatches.len(), mismatches, took),
    )
}

// ---- 2 ----

fn replay_equivalence() -> Outcome {
    let started = Instant::now();
    let mut bad = Vec::new();
    let mut finals: BTreeMap<LifecycleState, u32> = BTreeMap::new();
    for seed in 0..1000u64 {
        let env = HarnessEnv::new(seed);
        let spec = FleetSpec::new(1, ScriptMix::Random, seed);
        let mut s = fleet_script(&spec, 0).unwrap();
        if seed.is_multiple_of(7) {
            s = inject_fault(&s, Fault::Stall).unwrap_or(s);
        }
        let mut resolver = AutoResolver::mixed(seed);
        if seed.is_multiple_of(3) {
            resolver = resolver.with(RiskClass::High, Directive::Abort);
        }
        let out = run_scenario(&env, &s, seed, Some(&resolver)).unwrap();
        *finals.entry(out.final_state).or_default() += 1;
        let j = env.kernel.journal();
        let live = env.kernel.live_state(&out.instance_id).unwrap();
        let replayed = j.replay_state(&out.instance_id).unwrap();
        let fresh = JournalStore::new();
        fresh.import_jsonl(&j.export_all()).unwrap();
        let imported = fresh.replay_state(&out.instance_id).unwrap();
        if replayed != live || imported != live {
            bad.push(seed);
        }
    }
    let took = started.elapsed();
    check(
        bad.is_empty() && took < Duration::from_secs(60) && finals.len() >= 4,
        format!("1000 scenarios, {} mismatches {:?}, final states {:?}, {:?} (< 60s)", bad.len(), bad, finals, took),
    )
}

// ---- 3 ----

/// Byte range of the payload object within a canonical line.
fn payload_span(line: &str) -> (usize, usize) {
    let start = line.find("\"payload\":").unwrap() + "\"payload\":".len();
    let end = line.find(",\"prev_hash\":").unwrap();
    (start, end)
}

fn tamper_evidence() -> Outcome {
    let env = HarnessEnv::new(9);
    let mut s = script::collection_letter(60);
    s.error_rate = 0.0;
    let out = run_scenario(&env, &s, 9, Some(&AutoResolver::approve_all(9))).unwrap();
    let text = env.kernel.journal().export_stream(&out.instance_id).unwrap();
    let lines: Vec<&str> = text.lines().take(100).collect();
    if lines.len() != 100 {
        return check(false, format!("fixture has {} records, need 100", lines.len()));
    }
    let clean = lines.join("\n");
    if !verify_stream_lines(&clean).is_valid() {
        return check(false, "untouched fixture does not verify");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xB17F);
    let (mut missed, mut misplaced) = (0, 0);
    let flips = 1000;
    for _ in 0..flips {
        let idx = rng.random_range(0..lines.len());
        let (a, b) = payload_span(lines[idx]);
        let mut bytes = lines[idx].as_bytes().to_vec();
        let pos = rng.random_range(a..b);
        bytes[pos] ^= 1 << rng.random_range(0..8);
        let mut tampered: Vec<String> = lines.iter().map(|l| (*l).to_owned()).collect();
        tampered[idx] = String::from_utf8_lossy(&bytes).into_owned();
        match verify_stream_lines(&tampered.join("\n")) {
            ChainStatus::Valid => missed += 1,
            ChainStatus::Invalid { first_bad_seq } if first_bad_seq != idx as u64 => misplaced += 1,
            ChainStatus::Invalid { .. } => {}
        }
    }
    check(
        missed == 0 && misplaced == 0,
        format!("100-record stream, {flips} payload bit flips: {missed} missed, {misplaced} at the wrong index"),
    )
}

// ---- 4 ----

fn level_rank(l: &str) -> u8 {
    match l {
        "Assisted" => 1,
        "Collaborative" => 2,
        "Supervised" => 3,
        "FullWithGovernance" => 4,
        other => panic!("unknown level {other}"),
    }
}

#[derive(Default, Debug)]
struct Scan {
    gated_executions: u64,
    gate_violations: Vec<String>,
    increases: u64,
    autonomy_violations: Vec<String>,
}

/// Reads raw journal lines only; shares nothing with the kernel's audit.
fn scan(lines: &[Value], humans: &HashSet<&str>) -> Scan {
    let mut out = Scan::default();
    let mut gate: HashMap<(String, String), String> = HashMap::new();
    let mut action_of_cp: HashMap<(String, String), String> = HashMap::new();
    let mut approved: HashSet<(String, String)> = HashSet::new();
    for v in lines {
        let inst = v["instance_id"].as_str().unwrap().to_owned();
        let p = &v["payload"];
        match v["kind"].as_str().unwrap() {
            "WorkProgress" => {
                let Some(a) = p.get("action") else { continue };
                let aid = a["action_id"].as_str().unwrap().to_owned();
                let key = (inst.clone(), aid.clone());
                match p["status"].as_str().unwrap() {
                    "proposed" => {
                        gate.insert(key.clone(), a["gate"].as_str().unwrap().to_owned());
                        if let Some(cp) = a.get("checkpoint_id").and_then(Value::as_str) {
                            action_of_cp.insert((inst, cp.to_owned()), aid);
                        }
                    }
                    "executed" | "error" => match gate.get(&key).map(String::as_str) {
                        None => out.gate_violations.push(format!("{inst}/{aid} ran unproposed")),
                        Some("Block") => out.gate_violations.push(format!("{inst}/{aid} ran while blocked")),
                        Some("RequireApproval") => {
                            out.gated_executions += 1;
                            if !approved.contains(&key) {
                                out.gate_violations.push(format!("{inst}/{aid} ran without approval"));
                            }
                        }
                        Some(_) => {}
                    },
                    _ => {}
                }
            }
            "HITL" if p["phase"] == "resolve" => {
                let d = p["resolution"]["directive"].as_str().unwrap();
                let cp = p["checkpoint_id"].as_str().unwrap().to_owned();
                if d == "proceed" || d == "proceed_with_modification" {
                    if let Some(aid) = action_of_cp.get(&(inst.clone(), cp)) {
                        approved.insert((inst, aid.clone()));
                    }
                }
            }
            "Autonomy" if p["phase"] == "change" => {
                let from = level_rank(p["from_level"].as_str().unwrap());
                let to = level_rank(p["to_level"].as_str().unwrap());
                if to > from {
                    out.increases += 1;
                    let by = p["approved_by"].as_str();
                    if !by.is_some_and(|b| humans.contains(b)) {
                        out.autonomy_violations.push(format!("{} raised without a human: {by:?}", p["change_id"]));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn raw_lines(env: &HarnessEnv) -> Vec<Value> {
    env.kernel
        .journal()
        .export_all()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn gate_soundness() -> Outcome {
    let humans: HashSet<&str> = [env::ADMIN, env::OPERATOR, env::APPROVER].into();
    let mut total = Scan::default();
    let mut risks: HashSet<String> = HashSet::new();
    let mut all_lines = Vec::new();
    for mix in [ScriptMix::Random, ScriptMix::all_builtin()] {
        let env = HarnessEnv::new(42);
        let mut spec = FleetSpec::new(200, mix, 42);
        spec.promote = true;
        run_fleet(&env, &spec, Some(&AutoResolver::mixed(42))).unwrap();
        let lines = raw_lines(&env);
        for v in &lines {
            if let Some(r) = v["payload"]["action"]["risk_class"].as_str() {
                risks.insert(r.to_owned());
            }
        }
        let s = scan(&lines, &humans);
        total.gated_executions += s.gated_executions;
        total.increases += s.increases;
        total.gate_violations.extend(s.gate_violations);
        total.autonomy_violations.extend(s.autonomy_violations);
        all_lines = lines;
    }
    // The scan must notice a forged execution and a forged promotion.
    let mut forged = all_lines.clone();
    let victim = forged
        .iter()
        .find(|v| v["payload"]["action"]["gate"] == "RequireApproval")
        .cloned()
        .unwrap();
    let mut exec = victim.clone();
    exec["payload"]["status"] = "executed".into();
    let mut prop = victim;
    let fresh_id = "act-forged";
    prop["payload"]["action"]["action_id"] = fresh_id.into();
    prop["payload"]["action"]["checkpoint_id"] = "cp-forged".into();
    exec["payload"]["action"]["action_id"] = fresh_id.into();
    forged.push(prop);
    forged.push(exec);
    let promo = serde_json::json!({"instance_id": "kind/payment", "kind": "Autonomy",
        "payload": {"phase": "change", "change_id": "chg-forged", "from_level": "Supervised",
                    "to_level": "FullWithGovernance", "approved_by": "sentinel"}});
    forged.push(promo);
    let caught = scan(&forged, &humans);
    let sensitive = caught.gate_violations.len() == 1 && caught.autonomy_violations.len() == 1;

    check(
        total.gate_violations.is_empty()
            && total.autonomy_violations.is_empty()
            && total.gated_executions > 0
            && total.increases > 0
            && risks.len() == 4
            && sensitive,
        format!(
            "200-agent fleets, seed 42, risks {:?}: {} approval-gated executions, {} unapproved; {} autonomy increases, {} without a human; forged records caught: {sensitive}",
            {
                let mut r: Vec<_> = risks.into_iter().collect();
                r.sort();
                r
            },
            total.gated_executions,
            total.gate_violations.len(),
            total.increases,
            total.autonomy_violations.len()
        ),
    )
}

// ---- 5 ----

fn spot_check_run() -> (usize, Vec<String>) {
    const TARGET: usize = 10_000;
    let env = HarnessEnv::new(42);
    let mut s = script::collection_letter(12);
    s.error_rate = 0.0;
    let resolver = AutoResolver::approve_all(42);
    let mut auto: Vec<String> = Vec::new();
    let mut i = 0u64;
    while auto.len() < TARGET {
        let mut run = AgentRun::new(s.clone(), 42, i);
        run.run(&env, Some(&resolver)).unwrap();
        i += 1;
        for r in env.kernel.journal().stream_records(run.instance_id().unwrap()).unwrap() {
            let Some(p) = r.work_progress() else { continue };
            if p.status != ProgressStatus::Proposed {
                continue;
            }
            if let Some(a) = p.action {
                let g = a.gate.map(|g| g.as_str()).unwrap_or_default();
                if g == "AutoProceed" || g == "AutoProceedNotify" {
                    auto.push(a.action_id);
                }
            }
        }
    }
    auto.truncate(TARGET);
    let first: HashSet<&String> = auto.iter().collect();
    let mut reviewed: Vec<String> = env
        .kernel
        .reviews()
        .into_iter()
        .map(|t| t.action_id)
        .filter(|a| first.contains(a))
        .collect();
    reviewed.sort();
    (auto.len(), reviewed)
}

fn spot_check_rate() -> Outcome {
    let (n, a) = spot_check_run();
    let (_, b) = spot_check_run();
    let frac = a.len() as f64 / n as f64;
    check(
        (0.03..=0.07).contains(&frac) && a == b,
        format!("rate 0.05 over {n} auto-proceeded actions: {} reviewed ({frac:.4}), identical on rerun: {}", a.len(), a == b),
    )
}

// ---- 6 ----

fn sentinel_containment() -> Outcome {
    let spec = DrillSpec::default();
    let burst = burst_drill(&spec, 1000, 1.0, 500).unwrap();
    let quiet = quiet_drill(&spec, 10_000).unwrap();
    let contained_in = burst.latency_events;
    let pass = contained_in.is_some_and(|l| l <= 50)
        && burst.all_suspended
        && burst.live_after == 0
        && quiet.events >= 10_000
        && quiet.signals.len() <= 1;
    check(
        pass,
        format!(
            "burst {}x base error rate: signal after {:?} events (<= 50), {} instances suspended, {} left live; fault-free {} events: {} false positives (<= 1)",
            burst.burst_rate / spec.base_error_rate,
            contained_in,
            burst.contained.len(),
            burst.live_after,
            quiet.events,
            quiet.signals.len()
        ),
    )
}

// ---- 7 ----

fn nearest_rank(mut xs: Vec<f64>, p: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p / 100.0) * xs.len() as f64).ceil().max(1.0) as usize;
    xs[rank - 1]
}

fn analytics_fixture(seed: u64) -> HarnessEnv {
    let env = HarnessEnv::new(seed);
    let mut spec = FleetSpec::new(80, ScriptMix::Random, seed);
    if seed.is_multiple_of(2) {
        spec.faults = vec!["stall".parse().unwrap()];
    } else {
        spec.n = 120;
    }
    spec.promote = seed % 4 == 1;
    let mut resolver = AutoResolver::mixed(seed);
    if seed.is_multiple_of(3) {
        resolver = resolver.with(RiskClass::Medium, Directive::Abort);
    }
    run_fleet(&env, &spec, Some(&resolver)).unwrap();
    env
}

fn analytics_oracle() -> Outcome {
    let mut problems = Vec::new();
    let mut coverage = [0u64; 4];
    for seed in 1..=20u64 {
        let env = analytics_fixture(seed);
        let records = env.kernel.journal().all_records();
        let now = env.now();
        let snap = snapshot(&records, now);
        let raw = raw_lines(&env);
        let mut fail = |what: &str| problems.push(format!("seed {seed}: {what}"));

        let mut last: BTreeMap<String, String> = BTreeMap::new();
        let mut kind_of: HashMap<String, String> = HashMap::new();
        let (mut actions, mut opened, mut resolved, mut expired) = (0u64, 0u64, 0u64, 0u64);
        let mut directives: HashMap<String, u64> = HashMap::new();
        let mut actions_by: HashMap<String, u64> = HashMap::new();
        let mut opened_by: HashMap<String, u64> = HashMap::new();
        let mut opened_at: HashMap<String, u64> = HashMap::new();
        let mut lat = Vec::new();
        let mut days: BTreeMap<u64, u64> = BTreeMap::new();
        let mut levels: BTreeMap<String, String> = BTreeMap::new();
        let mut signals = 0u64;
        for v in &raw {
            let inst = v["instance_id"].as_str().unwrap().to_owned();
            let ts = v["timestamp"].as_u64().unwrap();
            let p = &v["payload"];
            match v["kind"].as_str().unwrap() {
                "StateTransition" => {
                    if p["event"].is_null() {
                        kind_of.insert(inst.clone(), p["agent_kind"].as_str().unwrap().to_owned());
                        *days.entry(ts / DAY_MS * DAY_MS).or_default() += 1;
                    }
                    last.insert(inst, p["to"].as_str().unwrap().to_owned());
                }
                "WorkProgress" if p["status"] == "proposed" => {
                    actions += 1;
                    *actions_by.entry(kind_of[&inst].clone()).or_default() += 1;
                }
                "HITL" => match p["phase"].as_str().unwrap() {
                    "open" => {
                        opened += 1;
                        *opened_by.entry(kind_of[&inst].clone()).or_default() += 1;
                        opened_at.insert(p["checkpoint_id"].as_str().unwrap().to_owned(), ts);
                    }
                    "resolve" => {
                        resolved += 1;
                        let r = &p["resolution"];
                        *directives.entry(r["directive"].as_str().unwrap().to_owned()).or_default() += 1;
                        let t0 = opened_at[p["checkpoint_id"].as_str().unwrap()];
                        lat.push((r["resolved_at"].as_u64().unwrap() - t0) as f64 / 1000.0);
                    }
                    "expire" => expired += 1,
                    _ => {}
                },
                "Autonomy" => {
                    levels.insert(p["agent_kind"].as_str().unwrap().to_owned(), p["to_level"].as_str().unwrap().to_owned());
                }
                "Anomaly" if p["phase"] == "signal" => signals += 1,
                _ => {}
            }
        }
        let d = |k: &str| directives.get(k).copied().unwrap_or(0);
        coverage[0] += resolved;
        coverage[1] += expired;
        coverage[2] += d("abort");
        coverage[3] += last.values().filter(|s| *s == "Finished").count() as u64;

        if snap.instances != last.len() as u64 {
            fail("instances");
        }
        for s in LifecycleState::ALL {
            let want = last.values().filter(|x| *x == s.as_str()).count() as u64;
            if snap.state_distribution.get(&s).copied().unwrap_or(0) != want {
                fail(&format!("state {s}"));
            }
        }
        let e = &snap.engagement;
        let ints = [
            (e.actions, actions),
            (e.checkpoints_opened, opened),
            (e.resolved, resolved),
            (e.timeouts, expired),
            (e.approvals, d("proceed")),
            (e.modifications, d("proceed_with_modification")),
            (e.denials, d("deny_and_replan")),
            (e.aborts, d("abort")),
            (snap.anomaly_count, signals),
            (snap.resolution_latency.samples, lat.len() as u64),
        ];
        if ints.iter().any(|(a, b)| a != b) {
            fail(&format!("engagement counts {ints:?}"));
        }
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        if (e.engagement_rate - ratio(opened, actions)).abs() > 1e-12 {
            fail("engagement rate");
        }
        if (e.rejection_rate - ratio(d("deny_and_replan") + d("abort"), resolved)).abs() > 1e-12 {
            fail("rejection rate");
        }
        for (kind, a) in &actions_by {
            let want = 100.0 * ratio(opened_by.get(kind).copied().unwrap_or(0), *a);
            if (snap.intervention_frequency.get(kind).copied().unwrap_or(-1.0) - want).abs() > 1e-12 {
                fail(&format!("intervention frequency {kind}"));
            }
        }
        if (snap.resolution_latency.median - nearest_rank(lat.clone(), 50.0)).abs() > 1e-12
            || (snap.resolution_latency.p90 - nearest_rank(lat, 90.0)).abs() > 1e-12
        {
            fail("latency percentiles");
        }
        for (level, n) in &snap.autonomy_distribution {
            if *n != levels.values().filter(|l| *l == level.as_str()).count() as u64 {
                fail(&format!("autonomy {level}"));
            }
        }
        if snap.adoption_series.values().sum::<u64>() != kind_of.len() as u64
            || days.iter().any(|(day, n)| snap.adoption_series.get(day) != Some(n))
        {
            fail("adoption series");
        }
    }
    let covered = coverage.iter().all(|c| *c > 0);
    check(
        problems.is_empty() && covered,
        format!(
            "20 fleet journals recounted from raw lines: {} discrepancies {:?}; resolutions/timeouts/aborts/finishes seen {:?}",
            problems.len(),
            problems.iter().take(5).collect::<Vec<_>>(),
            coverage
        ),
    )
}

// ---- 8 ----

fn scenario_fidelity() -> Outcome {
    let env = HarnessEnv::new(42);
    let email = run_scenario(&env, &script::group_email(25), 42, Some(&AutoResolver::approve_all(42))).unwrap();
    let recs = env.kernel.journal().stream_records(&email.instance_id).unwrap();
    let classes: HashSet<RecordKind> = recs.iter().map(|r| r.kind).collect();
    let email_ok = email.final_state == LifecycleState::Finished
        && [RecordKind::StateTransition, RecordKind::WorkProgress, RecordKind::Hitl]
            .iter()
            .all(|k| classes.contains(k));

    let env = HarnessEnv::new(42);
    let food = inject_fault(&script::food_order(), Fault::DropConstraint).unwrap();
    let order = run_scenario(&env, &food, 42, Some(&AutoResolver::approve_all(42))).unwrap();
    let all = env.kernel.journal().all_records();
    let trace = trace_responsibility(&all, &format!("{}/order_placed", order.instance_id)).unwrap();
    let dropped = find_dropped_constraints(&trace);
    let culprit = dropped
        .first()
        .and_then(|d| all.iter().find(|r| r.id() == d.record))
        .and_then(|r| r.decision())
        .map(|d| d.chosen);
    let food_ok = dropped.len() == 1
        && dropped[0].dropped == [ALLERGY.to_owned()]
        && culprit.as_deref() == Some("summary");
    let mut kinds: Vec<&str> = classes.iter().map(|k| k.as_str()).collect();
    kinds.sort();
    check(
        email_ok && food_ok,
        format!(
            "group email {} with {kinds:?}; food order trace of {} steps blames the '{}' decision for dropping {:?}",
            email.final_state,
            trace.steps.len(),
            culprit.unwrap_or_default(),
            dropped.first().map(|d| &d.dropped)
        ),
    )
}

// ---- 9 ----

fn fleet_scale() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_harness"))
        .args(["run", "--script", "all", "--seed", "42", "--fleet", "2000", "--resolver", "mixed", "--promote"])
        .output()
        .expect("harness binary runs");
    let took = started.elapsed();
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    let violations = summary["invariant_failures"].as_array().map(Vec::len);
    let code = out.status.code();
    check(
        code == Some(0) && violations == Some(0) && took < Duration::from_secs(300),
        format!(
            "2000 agents, {} records: exit {code:?}, {violations:?} invariant violations, {took:?} (< 5 min)",
            summary["journal_records"]
        ),
    )
}
