use std::collections::BTreeMap;

use agentgov_core::analytics::{self, SeriesMetric};
use agentgov_core::hitl::{CheckpointStatus, ResolutionRequest};
use agentgov_core::journal::payload::DecisionPayload;
use agentgov_core::journal::{filter::parse_query, JournalRecord, RecordRef};
use agentgov_core::kernel::ExecutionOutcome;
use agentgov_core::{
    ActionDescriptor, AgentConfig, AutonomyLevel, EventKind, LifecycleEvent, LifecycleState, Millis, RiskClass,
    Role,
};
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Path, Query, RawQuery, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::auth::Caller;
use crate::error::{ok, ApiError, ApiResult, Canonical};
use crate::{sse, AppState};

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/health", get(health))
        .route("/agents", post(create_agent).get(list_agents))
        .route("/agents/{id}", get(get_agent))
        .route("/agents/{id}/launch", post(launch))
        .route("/agents/{id}/finish", post(finish))
        .route("/agents/{id}/abort", post(abort))
        .route("/agents/{id}/suspend", post(suspend))
        .route("/agents/{id}/resume", post(resume))
        .route("/agents/{id}/progress", post(progress))
        .route("/agents/{id}/decisions", post(decision))
        .route("/agents/{id}/actions", post(report_action))
        .route("/agents/{id}/actions/{action_id}/result", post(report_result))
        .route("/agents/{id}/journal", get(agent_journal))
        .route("/agents/{id}/journal/export", get(agent_journal_export))
        .route("/agents/{id}/journal/verify", get(agent_journal_verify))
        .route("/journal", get(journal_query))
        .route("/journal/export", get(journal_export))
        .route("/checkpoints", get(list_checkpoints))
        .route("/checkpoints/{id}", get(get_checkpoint))
        .route("/checkpoints/{id}/resolve", post(resolve_checkpoint))
        .route("/reviews", get(list_reviews))
        .route("/metrics/snapshot", get(metrics_snapshot))
        .route("/metrics/timeseries", get(metrics_timeseries))
        .route("/reports/{chart_id}", post(report))
        .route("/trace/{artifact_id}", get(trace))
        .route("/autonomy/kinds", get(list_kinds))
        .route("/autonomy/kinds/{kind}/eligibility", get(eligibility))
        .route("/autonomy/changes", post(request_change).get(list_changes))
        .route("/autonomy/changes/{id}/approve", post(approve_change))
        .route("/anomalies", get(list_anomalies))
        .route("/anomalies/{id}/acknowledge", post(acknowledge_anomaly))
        .route("/events", get(sse::events))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
}

/// A JSON request body. An empty body reads as `{}`. Malformed JSON is a
/// 400, JSON of the wrong shape a 422.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = axum::body::Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(JsonBody).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Data => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema_violation", e.to_string()),
                _ => ApiError::bad_request(format!("malformed JSON: {e}")),
            }
        })
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn jsonl(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn health(State(st): State<AppState>) -> impl IntoResponse {
    ok(json!({
        "status": if st.storage.failed() { "storage_failed" } else { "ok" },
        "records": st.kernel.journal().len(),
        "next_frame": st.kernel.events().next_seq(),
    }))
}

// ---- instances ----

async fn create_agent(
    State(st): State<AppState>,
    caller: Caller,
    JsonBody(config): JsonBody<AgentConfig>,
) -> ApiResult<impl IntoResponse> {
    let inst = st.kernel.create_instance(config, &caller.0.id)?;
    Ok(Canonical(StatusCode::CREATED, inst))
}

#[derive(Deserialize)]
struct ListQuery {
    query: Option<String>,
}

async fn list_agents(
    State(st): State<AppState>,
    caller: Caller,
    q: Result<Query<ListQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let q = query(q)?;
    Ok(ok(st.kernel.instances(q.query.as_deref())))
}

async fn get_agent(State(st): State<AppState>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let inst = st.kernel.instance(&id)?;
    caller.require_view(&inst)?;
    Ok(ok(inst))
}

#[derive(Serialize)]
struct TransitionResponse {
    instance_id: String,
    state: LifecycleState,
    record: RecordRef,
}

fn transition(st: &AppState, caller: &Caller, id: &str, kind: EventKind, reason: String) -> ApiResult<impl IntoResponse> {
    let (state, record) = st
        .kernel
        .apply_event(id, LifecycleEvent::new(kind, caller.0.id.clone(), reason))?;
    Ok(ok(TransitionResponse {
        instance_id: id.to_owned(),
        state,
        record: record.id(),
    }))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReasonBody {
    #[serde(default)]
    reason: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FinishBody {
    output_summary: String,
}

async fn launch(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ReasonBody>,
) -> ApiResult<impl IntoResponse> {
    let reason = if b.reason.trim().is_empty() { "launched".to_owned() } else { b.reason };
    transition(&st, &caller, &id, EventKind::Launch, reason)
}

async fn finish(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<FinishBody>,
) -> ApiResult<impl IntoResponse> {
    transition(&st, &caller, &id, EventKind::Finish, b.output_summary)
}

async fn abort(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ReasonBody>,
) -> ApiResult<impl IntoResponse> {
    transition(&st, &caller, &id, EventKind::Abort, b.reason)
}

async fn suspend(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ReasonBody>,
) -> ApiResult<impl IntoResponse> {
    transition(&st, &caller, &id, EventKind::Suspend, b.reason)
}

async fn resume(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ReasonBody>,
) -> ApiResult<impl IntoResponse> {
    transition(&st, &caller, &id, EventKind::Resume, b.reason)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgressBody {
    step: String,
    #[serde(default)]
    detail: String,
}

#[derive(Serialize)]
struct RecordResponse {
    record: RecordRef,
}

fn recorded(r: JournalRecord) -> Canonical<RecordResponse> {
    ok(RecordResponse { record: r.id() })
}

async fn progress(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ProgressBody>,
) -> ApiResult<impl IntoResponse> {
    Ok(recorded(st.kernel.report_progress(&id, &caller.0.id, &b.step, &b.detail)?))
}

async fn decision(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(mut body): JsonBody<Value>,
) -> ApiResult<impl IntoResponse> {
    // The kernel assigns an id when the agent leaves it out.
    if let Some(obj) = body.as_object_mut() {
        obj.entry("decision_id").or_insert_with(|| Value::String(String::new()));
    }
    let d: DecisionPayload = serde_json::from_value(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema_violation", e.to_string()))?;
    let record = st.kernel.record_decision(&id, &caller.0.id, d)?;
    let decision_id = record.decision().map(|d| d.decision_id).unwrap_or_default();
    Ok(ok(json!({ "record": record.id(), "decision_id": decision_id })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionBody {
    #[serde(default)]
    action_id: Option<String>,
    action_kind: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    risk_class: Option<RiskClass>,
    confidence: f64,
    #[serde(default)]
    payload_preview: BTreeMap<String, Value>,
}

async fn report_action(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<ActionBody>,
) -> ApiResult<impl IntoResponse> {
    let desc = ActionDescriptor {
        instance_id: id,
        action_id: b.action_id,
        action_kind: b.action_kind,
        description: b.description,
        risk_class: b.risk_class,
        confidence: b.confidence,
        payload_preview: b.payload_preview,
    };
    Ok(ok(st.kernel.report_action(&caller.0.id, desc)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultBody {
    outcome: ExecutionOutcome,
    #[serde(default)]
    detail: String,
}

async fn report_result(
    State(st): State<AppState>,
    caller: Caller,
    Path((id, action_id)): Path<(String, String)>,
    JsonBody(b): JsonBody<ResultBody>,
) -> ApiResult<impl IntoResponse> {
    Ok(recorded(
        st.kernel
            .report_execution(&id, &caller.0.id, &action_id, b.outcome, &b.detail)?,
    ))
}

// ---- journal ----

async fn agent_journal(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult<impl IntoResponse> {
    caller.require_view(&st.kernel.instance(&id)?)?;
    let mut filter = parse_query(q.as_deref().unwrap_or("")).map_err(ApiError::bad_request)?;
    if matches!(&filter.instance_id, Some(other) if *other != id) {
        return Err(ApiError::bad_request("instance_id in the query differs from the path"));
    }
    filter.instance_id = Some(id);
    Ok(ok(st.kernel.journal().query(&filter)?))
}

async fn agent_journal_export(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    caller.require_view(&st.kernel.instance(&id)?)?;
    Ok(jsonl(st.kernel.journal().export_stream(&id)?))
}

async fn agent_journal_verify(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    caller.require_view(&st.kernel.instance(&id)?)?;
    Ok(ok(st.kernel.journal().verify_chain(&id)?))
}

async fn journal_query(State(st): State<AppState>, caller: Caller, RawQuery(q): RawQuery) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let filter = parse_query(q.as_deref().unwrap_or("")).map_err(ApiError::bad_request)?;
    Ok(ok(st.kernel.journal().query(&filter)?))
}

async fn journal_export(State(st): State<AppState>, caller: Caller) -> ApiResult<Response> {
    if caller.role() != Role::Admin {
        return Err(ApiError::forbidden("only admins export the whole journal"));
    }
    Ok(jsonl(st.kernel.journal().export_all()))
}

// ---- checkpoints ----

#[derive(Deserialize)]
struct CheckpointQuery {
    status: Option<String>,
}

fn parse_status(s: &str) -> ApiResult<CheckpointStatus> {
    match s.to_ascii_lowercase().as_str() {
        "pending" => Ok(CheckpointStatus::Pending),
        "resolved" => Ok(CheckpointStatus::Resolved),
        "expired" => Ok(CheckpointStatus::Expired),
        _ => Err(ApiError::bad_request(format!("unknown checkpoint status '{s}'"))),
    }
}

async fn list_checkpoints(
    State(st): State<AppState>,
    caller: Caller,
    q: Result<Query<CheckpointQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let status = query(q)?.status.as_deref().map(parse_status).transpose()?;
    Ok(ok(st.kernel.checkpoints(status)))
}

async fn get_checkpoint(State(st): State<AppState>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let cp = st.kernel.checkpoint(&id)?;
    caller.require_view(&st.kernel.instance(&cp.instance_id)?)?;
    Ok(ok(cp))
}

async fn resolve_checkpoint(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ResolutionRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(ok(st.kernel.resolve_checkpoint(&id, req, &caller.0.id)?))
}

async fn list_reviews(State(st): State<AppState>, caller: Caller) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.reviews()))
}

// ---- analytics ----

#[derive(Deserialize)]
struct SnapshotQuery {
    as_of: Option<Millis>,
}

async fn metrics_snapshot(
    State(st): State<AppState>,
    caller: Caller,
    q: Result<Query<SnapshotQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.snapshot(query(q)?.as_of)))
}

#[derive(Deserialize)]
struct SeriesQuery {
    metric: String,
    width_ms: Option<Millis>,
    start: Option<Millis>,
    end: Option<Millis>,
}

#[derive(Serialize)]
struct SeriesPoint {
    start: Millis,
    count: u64,
}

async fn metrics_timeseries(
    State(st): State<AppState>,
    caller: Caller,
    q: Result<Query<SeriesQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let q = query(q)?;
    let metric: SeriesMetric = q.metric.parse()?;
    let width = q.width_ms.unwrap_or(60_000);
    let end = q.end.unwrap_or_else(|| st.kernel.now().saturating_add(1));
    let start = q.start.unwrap_or_else(|| end.saturating_sub(width.saturating_mul(60)));
    let points = analytics::timeseries(&st.kernel.journal().all_records(), metric, width, start, end)?;
    Ok(ok(json!({
        "metric": metric.as_str(),
        "width_ms": width,
        "start": start,
        "end": end,
        "points": points.into_iter().map(|(start, count)| SeriesPoint { start, count }).collect::<Vec<_>>(),
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReportBody {
    #[serde(default)]
    question: Option<String>,
    /// Compare against the snapshot at this time instead of zero.
    #[serde(default)]
    prior_as_of: Option<Millis>,
    #[serde(default)]
    as_of: Option<Millis>,
}

async fn report(
    State(st): State<AppState>,
    caller: Caller,
    Path(chart_id): Path<String>,
    JsonBody(b): JsonBody<ReportBody>,
) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let current = st.kernel.snapshot(b.as_of);
    let prior = b.prior_as_of.map(|t| st.kernel.snapshot(Some(t)));
    let report = analytics::generate_report(&chart_id, &current, prior.as_ref(), None, b.question.as_deref())?;
    Ok(ok(report))
}

async fn trace(State(st): State<AppState>, caller: Caller, Path(artifact): Path<String>) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    let t = analytics::trace_responsibility(&st.kernel.journal().all_records(), &artifact)?;
    let dropped = analytics::find_dropped_constraints(&t);
    Ok(ok(json!({ "trace": t, "dropped_constraints": dropped })))
}

// ---- autonomy ----

async fn list_kinds(State(st): State<AppState>, caller: Caller) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.kinds()))
}

async fn eligibility(State(st): State<AppState>, caller: Caller, Path(kind): Path<String>) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.evaluate_promotion(&kind)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeBody {
    agent_kind: String,
    to_level: AutonomyLevel,
    #[serde(default)]
    reason: String,
}

async fn request_change(
    State(st): State<AppState>,
    caller: Caller,
    JsonBody(b): JsonBody<ChangeBody>,
) -> ApiResult<impl IntoResponse> {
    let outcome = st
        .kernel
        .request_change(&b.agent_kind, b.to_level, &caller.0.id, &b.reason)?;
    let status = match outcome.change.status {
        agentgov_core::autonomy::ChangeStatus::Pending => StatusCode::ACCEPTED,
        agentgov_core::autonomy::ChangeStatus::Applied => StatusCode::OK,
    };
    Ok(Canonical(status, outcome))
}

async fn approve_change(State(st): State<AppState>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(ok(st.kernel.approve_change(&id, &caller.0.id)?))
}

async fn list_changes(State(st): State<AppState>, caller: Caller) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.changes()))
}

// ---- anomalies ----

async fn list_anomalies(State(st): State<AppState>, caller: Caller) -> ApiResult<impl IntoResponse> {
    caller.require_human()?;
    Ok(ok(st.kernel.signals()))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AckBody {
    #[serde(default)]
    note: String,
}

async fn acknowledge_anomaly(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    JsonBody(b): JsonBody<AckBody>,
) -> ApiResult<impl IntoResponse> {
    Ok(recorded(st.kernel.acknowledge_signal(&id, &caller.0.id, &b.note)?))
}
