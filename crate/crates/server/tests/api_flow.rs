mod common;

use axum::http::{Method, StatusCode};
use common::Api;
use serde_json::json;

#[tokio::test]
async fn approval_round_trip_over_http() {
    let api = Api::new();
    let id = api.running("mail", "agent-1").await;

    let r = api
        .post(
            &format!("/agents/{id}/actions"),
            "secret-agent-1",
            json!({"action_kind": "send", "risk_class": "High", "confidence": 0.9}),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["outcome"], "checkpoint");
    let cp = r.body["checkpoint_id"].as_str().unwrap().to_owned();
    let action = r.body["action_id"].as_str().unwrap().to_owned();

    // Executing while the instance waits on the human is refused.
    let early = api
        .post(&format!("/agents/{id}/actions/{action}/result"), "secret-agent-1", json!({"outcome": "executed"}))
        .await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    assert_eq!(early.body["error"], "illegal_state");

    // The owning agent can poll its checkpoint; another agent cannot.
    assert_eq!(api.get(&format!("/checkpoints/{cp}"), "secret-agent-1").await.status, StatusCode::OK);
    assert_eq!(api.get(&format!("/checkpoints/{cp}"), "secret-agent-2").await.status, StatusCode::FORBIDDEN);

    let pending = api.get("/checkpoints?status=pending", "secret-op").await;
    assert_eq!(pending.body.as_array().unwrap().len(), 1);
    assert_eq!(api.get(&format!("/agents/{id}"), "secret-op").await.body["state"], "AwaitingHuman");

    let r = api
        .post(&format!("/checkpoints/{cp}/resolve"), "secret-appr", json!({"directive": "proceed", "note": "ok"}))
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["state"], "Active");
    assert_eq!(r.body["replayed"], false);

    let r = api
        .post(&format!("/agents/{id}/actions/{action}/result"), "secret-agent-1", json!({"outcome": "executed", "detail": "sent"}))
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);

    let r = api
        .post(&format!("/agents/{id}/finish"), "secret-agent-1", json!({"output_summary": "mail sent"}))
        .await;
    assert_eq!(r.body["state"], "Finished");

    let journal = api.get(&format!("/agents/{id}/journal"), "secret-op").await;
    let kinds: Vec<&str> = journal.body.as_array().unwrap().iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"HITL") && kinds.contains(&"StateTransition") && kinds.contains(&"WorkProgress"));
    let hitl = api.get(&format!("/agents/{id}/journal?kind=HITL"), "secret-op").await;
    assert_eq!(hitl.body.as_array().unwrap().len(), 2);
    let v = api.get(&format!("/agents/{id}/journal/verify"), "secret-op").await;
    assert_eq!(v.body["status"], "valid");
}

#[tokio::test]
async fn low_risk_action_proceeds_and_suspended_instance_refuses() {
    let api = Api::new();
    let id = api.running("mail", "agent-1").await;
    let r = api
        .post(&format!("/agents/{id}/actions"), "secret-agent-1", json!({"action_kind": "draft", "confidence": 0.95}))
        .await;
    assert_eq!(r.body["outcome"], "proceed");

    let r = api.post(&format!("/agents/{id}/suspend"), "secret-op", json!({"reason": "look"})).await;
    assert_eq!(r.body["state"], "Suspended");
    let r = api
        .post(&format!("/agents/{id}/actions"), "secret-agent-1", json!({"action_kind": "draft", "confidence": 0.95}))
        .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["error"], "illegal_state");
}

#[tokio::test]
async fn errors_are_json_with_stable_codes() {
    let api = Api::new();
    let r = api.get("/agents/inst-999999", "secret-op").await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_instance")));

    let r = api.send(Method::POST, "/agents", Some("secret-op"), None, None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = api.post("/agents", "secret-op", json!({"agent_kind": "nope", "scope": "s", "objectives": ["o"], "risk_class_default": "Low", "owner": "agent-1"})).await;
    assert_eq!(r.body["error"], "unknown_agent_kind");

    let r = api.post("/agents", "secret-op", json!({"agent_kind": "mail", "scope": " ", "objectives": ["o"], "risk_class_default": "Low", "owner": "agent-1"})).await;
    assert_eq!(r.body["error"], "invalid_config");

    let r = api.get("/agents/x/journal?kind=Nope", "secret-op").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let id = api.running("mail", "agent-1").await;
    let r = api.get(&format!("/agents/{id}/journal?kind=Nope"), "secret-op").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = api.get("/metrics/timeseries?metric=bogus", "secret-op").await;
    assert_eq!(r.body["error"], "unknown_metric");
    let r = api.post("/reports/bogus", "secret-op", json!({})).await;
    assert_eq!(r.body["error"], "unknown_chart");
    let r = api.get("/nowhere", "secret-op").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = api.send(Method::POST, "/agents", Some("secret-op"), Some(json!("not an object")), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn responses_use_canonical_json() {
    let api = Api::new();
    let id = api.running("mail", "agent-1").await;
    let req = axum::http::Request::builder()
        .uri(format!("/agents/{id}"))
        .header("authorization", "Bearer secret-op")
        .body(axum::body::Body::empty())
        .unwrap();
    use http_body_util::BodyExt;
    use tower::ServiceExt;
    let resp = api.app.clone().oneshot(req).await.unwrap();
    let text = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(text, agentgov_core::journal::canonical_json(&v));
}

#[tokio::test]
async fn search_metrics_and_reports() {
    let api = Api::new();
    let a = api.running("mail", "agent-1").await;
    let _b = api.running("pay", "agent-2").await;
    let found = api.get("/agents?query=MAIL", "secret-op").await;
    let ids: Vec<&str> = found.body.as_array().unwrap().iter().map(|i| i["instance_id"].as_str().unwrap()).collect();
    assert_eq!(ids, vec![a.as_str()]);
    assert_eq!(api.get("/agents", "secret-op").await.body.as_array().unwrap().len(), 2);

    let snap = api.get("/metrics/snapshot", "secret-op").await;
    assert_eq!(snap.status, StatusCode::OK);
    assert_eq!(snap.body, serde_json::to_value(api.kernel().snapshot(None)).unwrap());

    api.clock.advance(1000);
    let ts = api.get("/metrics/timeseries?metric=instances_created&width_ms=1000", "secret-op").await;
    let total: u64 = ts.body["points"].as_array().unwrap().iter().map(|p| p["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 2);

    let rep = api.post("/reports/state_distribution", "secret-op", json!({"question": "how are we doing?"})).await;
    assert_eq!(rep.status, StatusCode::OK, "{}", rep.body);
    assert_eq!(rep.body["chart_id"], "state_distribution");
    let again = api.post("/reports/state_distribution", "secret-op", json!({"question": "how are we doing?"})).await;
    assert_eq!(rep.body, again.body);
}

#[tokio::test]
async fn autonomy_change_needs_eligibility_and_approver() {
    let api = Api::new();
    // Lowering applies at once.
    let r = api.post("/autonomy/changes", "secret-op", json!({"agent_kind": "mail", "to_level": "Collaborative", "reason": "cautious"})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["change"]["status"], "applied");

    // Raising without evidence is refused with the evidence attached.
    let r = api.post("/autonomy/changes", "secret-op", json!({"agent_kind": "mail", "to_level": "Supervised"})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["error"], "not_eligible");
    assert_eq!(r.body["details"]["evidence"]["eligible"], false);

    let r = api.post("/autonomy/changes", "secret-op", json!({"agent_kind": "mail", "to_level": "FullWithGovernance"})).await;
    assert_eq!(r.body["error"], "skipped_level");

    let kinds = api.get("/autonomy/kinds", "secret-op").await;
    let mail = kinds.body.as_array().unwrap().iter().find(|k| k["name"] == "mail").unwrap().clone();
    assert_eq!(mail["level"], "Collaborative");
    let e = api.get("/autonomy/kinds/mail/eligibility", "secret-appr").await;
    assert_eq!(e.body["window_n"], 50);
}

#[tokio::test]
async fn checkpoint_expiry_ticker_suspends() {
    let api = Api::new();
    let id = api.running("pay", "agent-1").await;
    let r = api
        .post(&format!("/agents/{id}/actions"), "secret-agent-1", json!({"action_kind": "pay", "confidence": 0.99}))
        .await;
    assert_eq!(r.body["outcome"], "checkpoint");
    let cp = r.body["checkpoint_id"].as_str().unwrap().to_owned();

    let ticker = agentgov_server::spawn_expiry(api.state.clone(), std::time::Duration::from_millis(5));
    api.clock.advance(60_001);
    let mut state = String::new();
    for _ in 0..200 {
        state = api.get(&format!("/agents/{id}"), "secret-op").await.body["state"].as_str().unwrap().to_owned();
        if state == "Suspended" {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    assert_eq!(state, "Suspended");
    assert_eq!(api.get(&format!("/checkpoints/{cp}"), "secret-op").await.body["status"], "Expired");
    let late = api.post(&format!("/checkpoints/{cp}/resolve"), "secret-appr", json!({"directive": "proceed"})).await;
    assert_eq!(late.body["error"], "checkpoint_expired");
    api.state.close_streams();
    ticker.await.unwrap();
}

#[tokio::test]
async fn denied_action_cannot_be_executed() {
    let api = Api::new();
    let id = api.running("pay", "agent-1").await;
    let r = api
        .post(&format!("/agents/{id}/actions"), "secret-agent-1", json!({"action_kind": "pay", "confidence": 0.99}))
        .await;
    let cp = r.body["checkpoint_id"].as_str().unwrap().to_owned();
    let action = r.body["action_id"].as_str().unwrap().to_owned();
    let r = api
        .post(&format!("/checkpoints/{cp}/resolve"), "secret-op", json!({"directive": "deny_and_replan", "note": "no"}))
        .await;
    assert_eq!(r.body["state"], "Active");
    let r = api
        .post(&format!("/agents/{id}/actions/{action}/result"), "secret-agent-1", json!({"outcome": "executed"}))
        .await;
    assert_eq!(r.body["error"], "action_not_permitted");

    // A different directive on the same checkpoint conflicts and carries the original.
    let r = api
        .post(&format!("/checkpoints/{cp}/resolve"), "secret-op", json!({"directive": "proceed"}))
        .await;
    assert_eq!(r.body["error"], "already_resolved");
    assert_eq!(r.body["details"]["resolution"]["directive"], "deny_and_replan");
}
