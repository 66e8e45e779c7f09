use agentgov_core::{Actor, AgentInstance, Role};
use axum::extract::FromRequestParts;
use axum::http::request::Parts;
use axum::http::{header, HeaderMap};

use crate::error::ApiError;
use crate::AppState;

/// The authenticated caller.
#[derive(Debug, Clone)]
pub struct Caller(pub Actor);

pub fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim()).filter(|t| !t.is_empty())
}

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        bearer(&parts.headers)
            .and_then(|t| state.kernel.authenticate(t))
            .map(Caller)
            .ok_or_else(ApiError::unauthenticated)
    }
}

impl Caller {
    pub fn role(&self) -> Role {
        self.0.role
    }

    pub fn require_human(&self) -> Result<(), ApiError> {
        if self.0.role.is_human() {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("{} tokens may not use this endpoint", self.0.role)))
        }
    }

    /// Humans see every instance; an agent sees the ones it owns.
    pub fn require_view(&self, inst: &AgentInstance) -> Result<(), ApiError> {
        if self.0.role.is_human() || inst.config.owner == self.0.id {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("{} does not own {}", self.0.id, inst.instance_id)))
        }
    }
}
