#![allow(dead_code)]

use std::sync::Arc;

use agentgov_core::{Kernel, ManualClock};
use agentgov_server::{open_kernel, router, AppState, ServerConfig};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const START: u64 = 1_700_000_000_000;

pub const CONFIG: &str = r#"
listen = "127.0.0.1:0"

[thresholds]
checkpoint_timeout_ms = 60000

[[actors]]
id = "admin"
role = "admin"
token = "secret-admin"

[[actors]]
id = "op"
role = "operator"
token = "secret-op"

[[actors]]
id = "appr"
role = "approver"
token = "secret-appr"

[[actors]]
id = "agent-1"
role = "agent"
token = "secret-agent-1"

[[actors]]
id = "agent-2"
role = "agent"
token = "secret-agent-2"

[[kinds]]
name = "mail"
level = "Supervised"

[[kinds]]
name = "pay"
level = "Assisted"
"#;

pub struct Api {
    pub state: AppState,
    pub app: Router,
    pub clock: ManualClock,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub replayed: bool,
}

impl Api {
    pub fn new() -> Self {
        Self::with_config(CONFIG, 1024)
    }

    pub fn with_config(text: &str, buffer: usize) -> Self {
        let cfg = ServerConfig::from_toml_str(text).expect("config");
        let clock = ManualClock::new(START);
        let kernel = open_kernel(&cfg, Arc::new(clock.clone())).expect("kernel");
        Self::from_kernel(Arc::new(kernel), clock, buffer)
    }

    pub fn from_kernel(kernel: Arc<Kernel>, clock: ManualClock, buffer: usize) -> Self {
        let state = AppState::new(kernel, buffer, 100);
        Self {
            app: router(state.clone()),
            state,
            clock,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.state.kernel
    }

    pub async fn send(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>, key: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        let body = match body {
            Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let replayed = resp.headers().contains_key("idempotent-replay");
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
        };
        Reply { status, body, replayed }
    }

    pub async fn get(&self, path: &str, token: &str) -> Reply {
        self.send(Method::GET, path, Some(token), None, None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> Reply {
        self.send(Method::POST, path, Some(token), Some(body), None).await
    }

    /// Creates and launches an instance of `kind` owned by `owner`.
    pub async fn running(&self, kind: &str, owner: &str) -> String {
        let r = self
            .post(
                "/agents",
                "secret-op",
                serde_json::json!({
                    "agent_kind": kind,
                    "scope": "test scope",
                    "objectives": ["do the thing"],
                    "risk_class_default": "Low",
                    "owner": owner,
                }),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        let id = r.body["instance_id"].as_str().unwrap().to_owned();
        let tok = format!("secret-{owner}");
        let r = self.post(&format!("/agents/{id}/launch"), &tok, serde_json::json!({})).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        id
    }
}

/// One parsed server-sent event.
#[derive(Debug, Clone)]
pub struct SseEvent {
    pub id: Option<u64>,
    pub event: String,
    pub data: Value,
}

/// Splits complete events off the front of `buf`.
pub fn drain_events(buf: &mut String) -> Vec<SseEvent> {
    let mut out = Vec::new();
    while let Some(end) = buf.find("\n\n") {
        let block: String = buf.drain(..end + 2).collect();
        let mut ev = SseEvent {
            id: None,
            event: "message".into(),
            data: Value::Null,
        };
        let mut data = String::new();
        let mut any = false;
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("id:") {
                ev.id = v.trim().parse().ok();
            } else if let Some(v) = line.strip_prefix("event:") {
                ev.event = v.trim().to_owned();
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.strip_prefix(' ').unwrap_or(v));
                any = true;
            }
        }
        if any {
            ev.data = serde_json::from_str(&data).unwrap();
            out.push(ev);
        }
    }
    out
}
