//! Replay of state-changing POSTs by client key.
//!
//! A key is scoped to the caller and path. The first response (anything but
//! a 5xx) is stored with the request body; a repeat with the same body gets
//! the stored response, a repeat with a different body gets 422. Concurrent
//! requests with one key run one at a time.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use parking_lot::Mutex;

use crate::auth::bearer;
use crate::error::ApiError;
use crate::AppState;

pub const HEADER: &str = "idempotency-key";
pub const REPLAY_HEADER: &str = "idempotent-replay";
const MAX_BODY: usize = 4 << 20;

#[derive(Clone)]
struct Stored {
    request: Bytes,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Stored>>>;

pub struct IdempotencyCache {
    capacity: usize,
    inner: Mutex<(HashMap<String, Slot>, VecDeque<String>)>,
}

impl IdempotencyCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    fn slot(&self, scope: &str) -> Slot {
        let mut guard = self.inner.lock();
        let (map, order) = &mut *guard;
        if let Some(s) = map.get(scope) {
            return s.clone();
        }
        while map.len() >= self.capacity {
            match order.pop_front() {
                Some(old) => {
                    map.remove(&old);
                }
                None => break,
            }
        }
        let s = Slot::default();
        map.insert(scope.to_owned(), s.clone());
        order.push_back(scope.to_owned());
        s
    }

    pub fn len(&self) -> usize {
        self.inner.lock().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub async fn layer(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get(HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned) else {
        return next.run(req).await;
    };
    // Unauthenticated requests fall through and get their 401 from the handler.
    let Some(actor) = bearer(req.headers()).and_then(|t| state.kernel.authenticate(t)) else {
        return next.run(req).await;
    };
    if key.is_empty() || key.len() > 200 {
        return ApiError::bad_request("idempotency key must be 1 to 200 characters").into_response();
    }

    let (parts, body) = req.into_parts();
    let request = match axum::body::to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::bad_request(format!("request body: {e}")).into_response(),
    };
    let scope = format!("{}\n{}\n{}", actor.id, parts.uri.path(), key);
    let slot = state.idempotency.slot(&scope);
    let mut stored = slot.lock().await;
    if let Some(s) = &*stored {
        if s.request != request {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_mismatch",
                "idempotency key was already used with a different request body",
            )
            .into_response();
        }
        tracing::debug!(%key, "idempotent replay");
        let mut resp = rebuild(s);
        resp.headers_mut().insert(REPLAY_HEADER, HeaderValue::from_static("true"));
        return resp;
    }

    let resp = next.run(Request::from_parts(parts, Body::from(request.clone()))).await;
    if resp.status().is_server_error() {
        return resp;
    }
    let (rparts, rbody) = resp.into_parts();
    let body = match axum::body::to_bytes(rbody, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(format!("response body: {e}")).into_response(),
    };
    let s = Stored {
        request,
        status: rparts.status,
        content_type: rparts.headers.get(axum::http::header::CONTENT_TYPE).cloned(),
        body,
    };
    *stored = Some(s.clone());
    Response::from_parts(rparts, Body::from(s.body))
}

fn rebuild(s: &Stored) -> Response {
    let mut resp = Response::new(Body::from(s.body.clone()));
    *resp.status_mut() = s.status;
    if let Some(ct) = &s.content_type {
        resp.headers_mut().insert(axum::http::header::CONTENT_TYPE, ct.clone());
    }
    resp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_oldest_beyond_capacity() {
        let c = IdempotencyCache::new(2);
        let a = c.slot("a");
        c.slot("b");
        c.slot("c");
        assert_eq!(c.len(), 2);
        assert!(!Arc::ptr_eq(&a, &c.slot("a")));
    }
}
