use agentgov_core::analytics::AnalyticsError;
use agentgov_core::journal::{canonical_json, JournalError};
use agentgov_core::sentinel::SentinelError;
use agentgov_core::KernelError;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::{json, Value};

/// A JSON body in the journal's canonical form (sorted keys, no spaces).
pub struct Canonical<T>(pub StatusCode, pub T);

impl<T: Serialize> IntoResponse for Canonical<T> {
    fn into_response(self) -> Response {
        match serde_json::to_value(&self.1) {
            Ok(v) => (
                self.0,
                [(header::CONTENT_TYPE, "application/json")],
                canonical_json(&v),
            )
                .into_response(),
            Err(e) => ApiError::internal(format!("response encoding: {e}")).into_response(),
        }
    }
}

pub fn ok<T: Serialize>(body: T) -> Canonical<T> {
    Canonical(StatusCode::OK, body)
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
    /// The journal could not be written; the server should stop.
    pub storage_failure: bool,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
            storage_failure: false,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing or unknown bearer token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "unauthorized", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).ok();
        self
    }
}

impl From<KernelError> for ApiError {
    fn from(e: KernelError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code) = match &e {
            KernelError::UnknownAgentKind(_) => (S::NOT_FOUND, "unknown_agent_kind"),
            KernelError::UnknownActor(_) => (S::NOT_FOUND, "unknown_actor"),
            KernelError::UnknownInstance(_) => (S::NOT_FOUND, "unknown_instance"),
            KernelError::UnknownCheckpoint(_) => (S::NOT_FOUND, "unknown_checkpoint"),
            KernelError::UnknownAction(_) => (S::NOT_FOUND, "unknown_action"),
            KernelError::UnknownChange(_) => (S::NOT_FOUND, "unknown_change"),
            KernelError::UnknownSignal(_) => (S::NOT_FOUND, "unknown_signal"),
            KernelError::Unauthorized(_) => (S::FORBIDDEN, "unauthorized"),
            KernelError::InvalidConfig(_) => (S::UNPROCESSABLE_ENTITY, "invalid_config"),
            KernelError::SchemaViolation(_) => (S::UNPROCESSABLE_ENTITY, "schema_violation"),
            KernelError::DuplicateKind(_) => (S::CONFLICT, "duplicate_kind"),
            KernelError::IllegalTransition { .. } => (S::CONFLICT, "illegal_transition"),
            KernelError::IllegalState(_) => (S::CONFLICT, "illegal_state"),
            KernelError::LaunchBlocked { .. } => (S::CONFLICT, "launch_blocked"),
            KernelError::DuplicateCheckpoint(_) => (S::CONFLICT, "duplicate_checkpoint"),
            KernelError::AlreadyResolved { .. } => (S::CONFLICT, "already_resolved"),
            KernelError::CheckpointExpired(_) => (S::CONFLICT, "checkpoint_expired"),
            KernelError::ActionNotPermitted(_) => (S::CONFLICT, "action_not_permitted"),
            KernelError::NotEligible(_) => (S::CONFLICT, "not_eligible"),
            KernelError::SkippedLevel { .. } => (S::CONFLICT, "skipped_level"),
            KernelError::ChangeNotPending(_) => (S::CONFLICT, "change_not_pending"),
            KernelError::AlreadyHandled(_) => (S::CONFLICT, "already_handled"),
            KernelError::Sentinel(SentinelError::InsufficientBaseline { .. }) => {
                (S::CONFLICT, "insufficient_baseline")
            }
            KernelError::Sentinel(SentinelError::AlreadyHandled(_)) => (S::CONFLICT, "already_handled"),
            KernelError::Analytics(a) => return a.clone().into(),
            KernelError::Journal(j) => return j.clone().into(),
        };
        let err = ApiError::new(status, code, message);
        match e {
            KernelError::AlreadyResolved { resolution, .. } => err.with_details(json!({ "resolution": resolution })),
            KernelError::NotEligible(report) => err.with_details(json!({ "evidence": report })),
            KernelError::InvalidConfig(f) => err.with_details(json!({ "failures": f })),
            _ => err,
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let (status, code) = match &e {
            AnalyticsError::MalformedRange(_) => (StatusCode::BAD_REQUEST, "malformed_range"),
            AnalyticsError::UnknownMetric(_) => (StatusCode::BAD_REQUEST, "unknown_metric"),
            AnalyticsError::UnknownArtifact(_) => (StatusCode::NOT_FOUND, "unknown_artifact"),
            AnalyticsError::UnknownChart(_) => (StatusCode::NOT_FOUND, "unknown_chart"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JournalError> for ApiError {
    fn from(e: JournalError) -> Self {
        let (status, code) = match &e {
            JournalError::UnknownInstance(_) => (StatusCode::NOT_FOUND, "unknown_instance"),
            JournalError::MalformedFilter(_) => (StatusCode::BAD_REQUEST, "malformed_filter"),
            JournalError::SchemaViolation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "schema_violation"),
            JournalError::Import { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "import_failed"),
            JournalError::StorageFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
            JournalError::CorruptChain { .. } | JournalError::Inconsistent { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_journal")
            }
        };
        let mut err = ApiError::new(status, code, e.to_string());
        err.storage_failure = matches!(e, JournalError::StorageFailure(_));
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(d) = self.details {
            body["details"] = d;
        }
        let mut resp = Canonical(self.status, body).into_response();
        if self.storage_failure {
            resp.extensions_mut().insert(StorageFailed);
        }
        resp
    }
}

/// Response extension marking a failed journal write.
#[derive(Debug, Clone, Copy)]
pub struct StorageFailed;

pub type ApiResult<T> = Result<T, ApiError>;
