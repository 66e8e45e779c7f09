//! `GET /events`: replay from a seq, then live frames.
//!
//! Every frame published by the kernel goes into one bounded broadcast
//! channel, so publishing never waits on a subscriber. A subscriber that
//! falls more than the buffer behind gets a `gap` event and is disconnected;
//! it reconnects with `Last-Event-ID` and the missed frames are replayed
//! from the kernel's frame log.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use agentgov_core::events::{EventFrame, FramePayload};
use agentgov_core::journal::canonical_json;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use futures_util::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::{broadcast, watch};

use crate::auth::Caller;
use crate::error::{ApiError, ApiResult};
use crate::AppState;

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    from_seq: Option<u64>,
}

pub fn event_name(payload: &FramePayload) -> &'static str {
    match payload {
        FramePayload::Record(_) => "record",
        FramePayload::Escalation { .. } => "escalation",
        FramePayload::Notification { .. } => "notification",
        FramePayload::Review(_) => "review",
        FramePayload::Gap { .. } => "gap",
    }
}

fn to_event(frame: &EventFrame) -> Event {
    let data = serde_json::to_value(frame)
        .map(|v| canonical_json(&v))
        .unwrap_or_else(|_| "{}".to_owned());
    Event::default()
        .id(frame.seq.to_string())
        .event(event_name(&frame.payload))
        .data(data)
}

fn gap_event(missed_from: u64, missed_to: u64) -> Event {
    let payload = FramePayload::Gap { missed_from, missed_to };
    let data = serde_json::to_value(&payload)
        .map(|v| canonical_json(&v))
        .unwrap_or_default();
    // No id, so the client's Last-Event-ID stays at the last frame it got.
    Event::default().event("gap").data(data)
}

struct Cursor {
    backlog: VecDeque<Arc<EventFrame>>,
    rx: broadcast::Receiver<Arc<EventFrame>>,
    shutdown: watch::Receiver<bool>,
    next: u64,
    state: AppState,
    done: bool,
}

impl Cursor {
    async fn step(mut self) -> Option<(Event, Cursor)> {
        if self.done {
            return None;
        }
        if let Some(f) = self.backlog.pop_front() {
            self.next = f.seq + 1;
            return Some((to_event(&f), self));
        }
        loop {
            let received = tokio::select! {
                r = self.rx.recv() => r,
                _ = self.shutdown.wait_for(|stop| *stop) => return None,
            };
            match received {
                Ok(f) if f.seq < self.next => continue,
                Ok(f) => {
                    self.next = f.seq + 1;
                    return Some((to_event(&f), self));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let head = self.state.kernel.events().next_seq();
                    tracing::warn!(skipped = n, from = self.next, "event subscriber too slow; dropping");
                    self.done = true;
                    let to = head.saturating_sub(1).max(self.next);
                    return Some((gap_event(self.next, to), self));
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

pub async fn events(
    State(state): State<AppState>,
    caller: Caller,
    headers: HeaderMap,
    query: Result<Query<EventsQuery>, QueryRejection>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    caller.require_human()?;
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let last_seen = match headers.get("last-event-id") {
        None => None,
        Some(v) => Some(
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| ApiError::bad_request("Last-Event-ID must be a frame seq"))?,
        ),
    };
    let from = q.from_seq.or(last_seen.map(|s| s + 1)).unwrap_or(0);

    // Subscribe before reading the backlog so nothing falls between them.
    let rx = state.frames.subscribe();
    let backlog: VecDeque<_> = state.kernel.events().since(from).into();
    tracing::debug!(subscriber = %caller.0.id, from, replay = backlog.len(), "event stream opened");
    let cursor = Cursor {
        backlog,
        rx,
        shutdown: state.shutdown.subscribe(),
        next: from,
        state: state.clone(),
        done: false,
    };
    let stream = stream::unfold(cursor, |c| async move { c.step().await.map(|(e, c)| (Ok(e), c)) });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
