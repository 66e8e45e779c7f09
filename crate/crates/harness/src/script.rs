//! Scripted agents. A script is a fixed list of steps that the runner turns
//! into kernel calls made as the owning agent.

use std::collections::BTreeMap;

use agentgov_core::RiskClass;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fault::Fault;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStep {
    pub name: String,
    #[serde(default)]
    pub data_sources: Vec<String>,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub alternatives: Vec<String>,
    pub chosen: String,
    #[serde(default)]
    pub rationale: String,
    pub confidence: f64,
    /// Artifact names, scoped to the instance when journaled.
    #[serde(default)]
    pub consumes: Vec<String>,
    #[serde(default)]
    pub produces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStep {
    pub kind: String,
    #[serde(default)]
    pub description: String,
    pub risk: RiskClass,
    pub confidence: f64,
    /// Touches the outside world (a send, a payment) and so can fail.
    #[serde(default)]
    pub effect: bool,
    #[serde(default)]
    pub preview: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Progress { name: String, detail: String },
    Decision(DecisionStep),
    Action(ActionStep),
    Finish { summary: String },
    Fail { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub agent_kind: String,
    pub risk_default: RiskClass,
    pub steps: Vec<Step>,
    /// Chance that an effectful action fails when carried out.
    pub error_rate: f64,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

impl ScenarioScript {
    pub fn has_decisions(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Decision(_)))
    }

    pub fn has_effects(&self) -> bool {
        self.steps
            .iter()
            .any(|s| matches!(s, Step::Action(a) if a.effect))
    }

    pub fn has_actions(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Action(_)))
    }
}

pub const SCRIPTS: [&str; 4] = ["group_email", "payment", "collection_letter", "food_order"];

/// Amounts above this are High risk.
pub const PAYMENT_HIGH_RISK_ABOVE: u64 = 1000;

/// Builds a named script. Scripts with variable content draw it from `rng`.
pub fn builtin(name: &str, rng: &mut impl Rng) -> Option<ScenarioScript> {
    match name {
        "group_email" => Some(group_email(rng.random_range(5..=40))),
        "payment" => Some(payment(rng.random_range(50..=4000))),
        "collection_letter" => Some(collection_letter(rng.random_range(3..=12))),
        "food_order" => Some(food_order()),
        _ => None,
    }
}

fn progress(name: &str, detail: impl Into<String>) -> Step {
    Step::Progress {
        name: name.to_owned(),
        detail: detail.into(),
    }
}

fn action(kind: &str, description: &str, risk: RiskClass, confidence: f64, effect: bool) -> ActionStep {
    ActionStep {
        kind: kind.to_owned(),
        description: description.to_owned(),
        risk,
        confidence,
        effect,
        preview: BTreeMap::new(),
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| (*s).to_owned()).collect()
}

/// Recipients per send call.
pub const EMAIL_BATCH: u32 = 10;

/// Draft, legal review, recipient verification, then one send per batch.
pub fn group_email(recipients: u32) -> ScenarioScript {
    let sends = (0..recipients.div_ceil(EMAIL_BATCH)).map(|b| {
        let mut send = action("send", "send the approved message", RiskClass::Low, 0.95, true);
        let n = EMAIL_BATCH.min(recipients - b * EMAIL_BATCH);
        send.preview.insert("recipients".into(), json!(n));
        send.preview.insert("batch".into(), json!(b + 1));
        Step::Action(send)
    });
    let mut verify = action(
        "verify_recipients",
        "confirm the distribution list",
        RiskClass::Medium,
        0.9,
        false,
    );
    verify.preview.insert("recipients".into(), json!(recipients));
    ScenarioScript {
        name: "group_email".into(),
        agent_kind: "group_email".into(),
        risk_default: RiskClass::Low,
        steps: vec![
            progress("collect_recipients", format!("{recipients} recipients from the CRM")),
            Step::Decision(DecisionStep {
                name: "draft_message".into(),
                data_sources: strings(&["crm", "brand_guide"]),
                constraints: strings(&["tone: formal", "no personal data in body"]),
                alternatives: strings(&["short announcement", "detailed letter"]),
                chosen: "short announcement".into(),
                rationale: "recipients asked for brief updates".into(),
                confidence: 0.85,
                consumes: vec![],
                produces: strings(&["draft"]),
            }),
            progress("draft", "message drafted"),
            Step::Action(action(
                "legal_review",
                "submit the draft for legal review",
                RiskClass::High,
                0.9,
                false,
            )),
            Step::Action(verify),
        ]
        .into_iter()
        .chain(sends)
        .chain([Step::Finish {
            summary: format!("group email sent to {recipients} recipients"),
        }])
        .collect(),
        error_rate: 0.25,
        faults: vec![],
    }
}

pub fn payment(amount: u64) -> ScenarioScript {
    let risk = if amount > PAYMENT_HIGH_RISK_ABOVE {
        RiskClass::High
    } else {
        RiskClass::Low
    };
    let mut pay = action("pay", "pay the matched invoice", risk, 0.92, true);
    pay.preview.insert("amount".into(), json!(amount));
    ScenarioScript {
        name: "payment".into(),
        agent_kind: "payment".into(),
        risk_default: RiskClass::Low,
        steps: vec![
            progress("load_invoice", format!("invoice for {amount}")),
            Step::Decision(DecisionStep {
                name: "match_invoice".into(),
                data_sources: strings(&["erp", "bank_feed"]),
                constraints: strings(&["within approved budget"]),
                alternatives: strings(&["pay now", "hold for review"]),
                chosen: "pay now".into(),
                rationale: "invoice matches the purchase order".into(),
                confidence: 0.9,
                consumes: vec![],
                produces: strings(&["payment_plan"]),
            }),
            Step::Action(pay),
            Step::Finish {
                summary: format!("paid {amount}"),
            },
        ],
        error_rate: 0.25,
        faults: vec![],
    }
}

/// One tone decision, then one mailed letter per debtor.
pub fn collection_letter(letters: usize) -> ScenarioScript {
    let mut steps = vec![Step::Decision(DecisionStep {
        name: "choose_tone".into(),
        data_sources: strings(&["ledger"]),
        constraints: strings(&["fair debt collection rules"]),
        alternatives: strings(&["reminder", "final notice"]),
        chosen: "reminder".into(),
        rationale: "balances are recent".into(),
        confidence: 0.8,
        consumes: vec![],
        produces: strings(&["tone"]),
    })];
    for i in 0..letters {
        let mut send = action("send_letter", "mail the letter", RiskClass::Medium, 0.9, true);
        send.preview.insert("letter".into(), json!(i + 1));
        steps.push(Step::Action(send));
    }
    steps.push(Step::Finish {
        summary: format!("{letters} letters sent"),
    });
    ScenarioScript {
        name: "collection_letter".into(),
        agent_kind: "collection_letter".into(),
        risk_default: RiskClass::Medium,
        steps,
        error_rate: 0.2,
        faults: vec![],
    }
}

pub const ALLERGY: &str = "allergy: wheat, soy";

/// A lunch order relayed through a summary. The allergy recorded when the
/// order is taken has to survive summarization to reach the restaurant choice.
pub fn food_order() -> ScenarioScript {
    let constraints = strings(&[ALLERGY, "budget: 40"]);
    let mut place = action("place_order", "order from the chosen restaurant", RiskClass::Medium, 0.9, true);
    place.preview.insert("items".into(), json!(3));
    ScenarioScript {
        name: "food_order".into(),
        agent_kind: "food_order".into(),
        risk_default: RiskClass::Low,
        steps: vec![
            Step::Decision(DecisionStep {
                name: "take_order".into(),
                data_sources: strings(&["chat"]),
                constraints: constraints.clone(),
                alternatives: vec![],
                chosen: "three lunches".into(),
                rationale: "customer request".into(),
                confidence: 0.95,
                consumes: vec![],
                produces: strings(&["order_notes"]),
            }),
            Step::Decision(DecisionStep {
                name: "summarize_order".into(),
                data_sources: strings(&["order_notes"]),
                constraints: constraints.clone(),
                alternatives: vec![],
                chosen: "summary".into(),
                rationale: "condense the conversation".into(),
                confidence: 0.8,
                consumes: strings(&["order_notes"]),
                produces: strings(&["order_summary"]),
            }),
            Step::Decision(DecisionStep {
                name: "choose_restaurant".into(),
                data_sources: strings(&["order_summary", "menus"]),
                constraints: constraints.clone(),
                alternatives: strings(&["bakery", "noodle bar", "salad bar"]),
                chosen: "salad bar".into(),
                rationale: "fits the summary and the budget".into(),
                confidence: 0.75,
                consumes: strings(&["order_summary"]),
                produces: strings(&["restaurant_choice"]),
            }),
            Step::Decision(DecisionStep {
                name: "compose_order".into(),
                data_sources: strings(&["restaurant_choice"]),
                constraints,
                alternatives: vec![],
                chosen: "submit".into(),
                rationale: "order assembled from the choice".into(),
                confidence: 0.9,
                consumes: strings(&["restaurant_choice"]),
                produces: strings(&["order_placed"]),
            }),
            Step::Action(place),
            Step::Finish {
                summary: "lunch ordered".into(),
            },
        ],
        error_rate: 0.25,
        faults: vec![],
    }
}

const RANDOM_KINDS: [&str; 4] = SCRIPTS;
const RANDOM_ACTIONS: [&str; 4] = ["lookup", "send", "pay", "update_record"];
const RISKS: [RiskClass; 4] = [
    RiskClass::Low,
    RiskClass::Medium,
    RiskClass::High,
    RiskClass::Critical,
];

/// A random script over any of the standard kinds. Most end with Finish, some
/// with Fail and a few with neither, leaving the instance live.
pub fn random_script(rng: &mut impl Rng) -> ScenarioScript {
    let kind = RANDOM_KINDS[rng.random_range(0..RANDOM_KINDS.len())];
    let len = rng.random_range(0..12);
    let mut steps = Vec::with_capacity(len + 1);
    let mut produced: Vec<String> = Vec::new();
    for i in 0..len {
        match rng.random_range(0..10) {
            0..=2 => steps.push(progress("work", format!("step {i}"))),
            3..=4 => {
                let consumes: Vec<String> = produced
                    .iter()
                    .filter(|_| rng.random_bool(0.4))
                    .cloned()
                    .collect();
                let name = format!("artifact_{i}");
                produced.push(name.clone());
                steps.push(Step::Decision(DecisionStep {
                    name: format!("decide_{i}"),
                    data_sources: strings(&["crm"]),
                    constraints: if rng.random_bool(0.5) { strings(&["budget"]) } else { vec![] },
                    alternatives: strings(&["a", "b"]),
                    chosen: "a".into(),
                    rationale: "scored higher".into(),
                    confidence: rng.random_range(0.3..=1.0),
                    consumes,
                    produces: vec![name],
                }));
            }
            _ => {
                let kind = RANDOM_ACTIONS[rng.random_range(0..RANDOM_ACTIONS.len())];
                steps.push(Step::Action(action(
                    kind,
                    "random action",
                    RISKS[rng.random_range(0..RISKS.len())],
                    rng.random_range(0.4..=1.0),
                    kind == "send" || kind == "pay",
                )));
            }
        }
    }
    match rng.random_range(0..10) {
        0 => steps.push(Step::Fail {
            reason: "agent gave up".into(),
        }),
        1 => {}
        _ => steps.push(Step::Finish {
            summary: "done".into(),
        }),
    }
    ScenarioScript {
        name: format!("random_{kind}"),
        agent_kind: kind.to_owned(),
        risk_default: RISKS[rng.random_range(0..3)],
        steps,
        error_rate: 0.1,
        faults: vec![],
    }
}
