//! Role x endpoint matrix. Each cell runs against a fresh server set up so
//! the call would succeed for an authorized role, and checks the journal
//! grew exactly when the call succeeded.

mod common;

use axum::http::{Method, StatusCode};
use common::Api;
use serde_json::{json, Value};

const CONFIG_EXTRA: &str = r#"
[[kinds]]
name = "easy"
level = "Assisted"
promotion = { window_n = 1, min_success_rate = 0.0, max_rejection_rate = 1.0, require_zero_open_anomalies = false }
"#;

const ROLES: [(&str, &str); 4] = [
    ("admin", "secret-admin"),
    ("operator", "secret-op"),
    ("approver", "secret-appr"),
    ("agent", "secret-agent-1"),
];

#[derive(Clone, Copy, Debug)]
enum Setup {
    None,
    Initiated,
    Active,
    Awaiting,
    Suspended,
    PendingChange,
}

struct Cell {
    name: &'static str,
    setup: Setup,
    method: Method,
    path: &'static str,
    body: Value,
    allowed: &'static [&'static str],
}

fn api() -> Api {
    Api::with_config(&format!("{}{}", common::CONFIG, CONFIG_EXTRA), 1024)
}

/// Returns substitutions for `{id}`, `{cp}` and `{chg}`.
async fn prepare(api: &Api, setup: Setup) -> (String, String, String) {
    let mut id = String::new();
    let mut cp = String::new();
    let mut chg = String::new();
    match setup {
        Setup::None => {}
        Setup::Initiated => {
            let r = api
                .post(
                    "/agents",
                    "secret-op",
                    json!({"agent_kind": "mail", "scope": "s", "objectives": ["o"], "risk_class_default": "Low", "owner": "agent-1"}),
                )
                .await;
            id = r.body["instance_id"].as_str().unwrap().to_owned();
        }
        Setup::Active => id = api.running("mail", "agent-1").await,
        Setup::Awaiting => {
            id = api.running("pay", "agent-1").await;
            let r = api
                .post(&format!("/agents/{id}/actions"), "secret-agent-1", json!({"action_kind": "pay", "confidence": 0.9}))
                .await;
            cp = r.body["checkpoint_id"].as_str().unwrap().to_owned();
        }
        Setup::Suspended => {
            id = api.running("mail", "agent-1").await;
            api.post(&format!("/agents/{id}/suspend"), "secret-op", json!({"reason": "hold"})).await;
        }
        Setup::PendingChange => {
            let done = api.running("easy", "agent-1").await;
            api.post(&format!("/agents/{done}/finish"), "secret-agent-1", json!({"output_summary": "ok"}))
                .await;
            let r = api
                .post("/autonomy/changes", "secret-op", json!({"agent_kind": "easy", "to_level": "Collaborative"}))
                .await;
            assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.body);
            chg = r.body["change"]["change_id"].as_str().unwrap().to_owned();
        }
    }
    (id, cp, chg)
}

fn cells() -> Vec<Cell> {
    let humans_ops: &[&str] = &["admin", "operator"];
    vec![
        Cell {
            name: "create",
            setup: Setup::None,
            method: Method::POST,
            path: "/agents",
            body: json!({"agent_kind": "mail", "scope": "s", "objectives": ["o"], "risk_class_default": "Low", "owner": "agent-1"}),
            allowed: humans_ops,
        },
        Cell {
            name: "launch",
            setup: Setup::Initiated,
            method: Method::POST,
            path: "/agents/{id}/launch",
            body: json!({}),
            allowed: &["admin", "operator", "agent"],
        },
        Cell {
            name: "progress",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/progress",
            body: json!({"step": "draft"}),
            allowed: &["agent"],
        },
        Cell {
            name: "decision",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/decisions",
            body: json!({"chosen": "a", "confidence": 0.8}),
            allowed: &["agent"],
        },
        Cell {
            name: "action",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/actions",
            body: json!({"action_kind": "draft", "confidence": 0.9}),
            allowed: &["agent"],
        },
        Cell {
            name: "finish",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/finish",
            body: json!({"output_summary": "done"}),
            allowed: &["agent"],
        },
        Cell {
            name: "abort",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/abort",
            body: json!({"reason": "stop"}),
            allowed: humans_ops,
        },
        Cell {
            name: "suspend",
            setup: Setup::Active,
            method: Method::POST,
            path: "/agents/{id}/suspend",
            body: json!({"reason": "hold"}),
            allowed: &["admin", "operator", "approver"],
        },
        Cell {
            name: "resume",
            setup: Setup::Suspended,
            method: Method::POST,
            path: "/agents/{id}/resume",
            body: json!({"reason": "go"}),
            allowed: humans_ops,
        },
        Cell {
            name: "resolve proceed",
            setup: Setup::Awaiting,
            method: Method::POST,
            path: "/checkpoints/{cp}/resolve",
            body: json!({"directive": "proceed"}),
            allowed: &["admin", "operator", "approver"],
        },
        Cell {
            name: "resolve abort",
            setup: Setup::Awaiting,
            method: Method::POST,
            path: "/checkpoints/{cp}/resolve",
            body: json!({"directive": "abort"}),
            allowed: humans_ops,
        },
        Cell {
            name: "lower autonomy",
            setup: Setup::None,
            method: Method::POST,
            path: "/autonomy/changes",
            body: json!({"agent_kind": "mail", "to_level": "Collaborative"}),
            allowed: humans_ops,
        },
        Cell {
            name: "approve change",
            setup: Setup::PendingChange,
            method: Method::POST,
            path: "/autonomy/changes/{chg}/approve",
            body: json!({}),
            allowed: &["admin", "approver"],
        },
    ]
}

#[tokio::test]
async fn role_matrix_and_journal_parity() {
    let mut lines = Vec::new();
    for cell in cells() {
        for (role, token) in ROLES {
            let api = api();
            let (id, cp, chg) = prepare(&api, cell.setup).await;
            let path = cell.path.replace("{id}", &id).replace("{cp}", &cp).replace("{chg}", &chg);
            let before = api.kernel().journal().len();
            let r = api.send(cell.method.clone(), &path, Some(token), Some(cell.body.clone()), None).await;
            let after = api.kernel().journal().len();
            let ok = r.status.is_success();
            let expected = cell.allowed.contains(&role);
            lines.push(format!("{:<16} {:<9} {}", cell.name, role, r.status.as_u16()));
            assert_eq!(ok, expected, "{} as {role}: {} {}", cell.name, r.status, r.body);
            if ok {
                assert!(after > before, "{} as {role} succeeded without a journal record", cell.name);
            } else {
                assert_eq!(r.status, StatusCode::FORBIDDEN, "{} as {role}: {}", cell.name, r.body);
                assert_eq!(after, before, "{} as {role} failed but wrote to the journal", cell.name);
            }
        }
    }
    println!("{}", lines.join("\n"));
}

#[tokio::test]
async fn reads_are_for_humans() {
    let api = api();
    let id = api.running("mail", "agent-1").await;
    for path in [
        "/agents",
        "/checkpoints",
        "/reviews",
        "/metrics/snapshot",
        "/metrics/timeseries?metric=finished",
        "/autonomy/kinds",
        "/autonomy/changes",
        "/anomalies",
        "/journal",
        "/events",
    ] {
        assert_eq!(api.get(path, "secret-agent-1").await.status, StatusCode::FORBIDDEN, "{path}");
        if path != "/events" {
            assert_eq!(api.get(path, "secret-appr").await.status, StatusCode::OK, "{path}");
        }
    }
    // An agent sees its own instance only.
    assert_eq!(api.get(&format!("/agents/{id}"), "secret-agent-1").await.status, StatusCode::OK);
    assert_eq!(api.get(&format!("/agents/{id}"), "secret-agent-2").await.status, StatusCode::FORBIDDEN);
    assert_eq!(api.get(&format!("/agents/{id}/journal"), "secret-agent-2").await.status, StatusCode::FORBIDDEN);
    assert_eq!(api.get("/journal/export", "secret-op").await.status, StatusCode::FORBIDDEN);
    assert_eq!(api.get("/journal/export", "secret-admin").await.status, StatusCode::OK);
}

#[tokio::test]
async fn missing_or_unknown_tokens_are_401() {
    let api = api();
    for token in [None, Some("wrong-token"), Some("")] {
        let r = api.send(Method::GET, "/agents", token, None, None).await;
        assert_eq!(r.status, StatusCode::UNAUTHORIZED);
        assert_eq!(r.body["error"], "unauthenticated");
    }
    let r = api.send(Method::GET, "/health", None, None, None).await;
    assert_eq!(r.status, StatusCode::OK);
}
