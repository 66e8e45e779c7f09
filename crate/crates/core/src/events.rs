//! Ordered event frames for live consumers (the console stream).
//!
//! Frames are numbered from 0 and kept for replay. Listeners are called
//! synchronously in seq order and must not block; the HTTP layer forwards
//! into a bounded channel and marks gaps for slow subscribers itself.

use std::fmt;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::hitl::{GateDecisionKind, RiskClass};
use crate::journal::{JournalRecord, RecordRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub review_id: String,
    pub instance_id: String,
    pub agent_kind: String,
    pub action_id: String,
    pub action_kind: String,
    pub source: RecordRef,
    pub created_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FramePayload {
    Record(JournalRecord),
    Escalation {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent_kind: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signal_id: Option<String>,
    },
    Notification {
        instance_id: String,
        action_id: String,
        action_kind: String,
        risk_class: RiskClass,
        gate: GateDecisionKind,
    },
    Review(ReviewTask),
    /// Frames in `[missed_from, missed_to]` were not delivered to this subscriber.
    Gap { missed_from: u64, missed_to: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    pub seq: u64,
    pub emitted_at: Millis,
    pub payload: FramePayload,
}

impl EventFrame {
    pub fn record_id(&self) -> Option<RecordRef> {
        match &self.payload {
            FramePayload::Record(r) => Some(r.id()),
            _ => None,
        }
    }
}

type Listener = Box<dyn Fn(&Arc<EventFrame>) + Send + Sync>;

#[derive(Default)]
pub struct EventLog {
    frames: RwLock<Vec<Arc<EventFrame>>>,
    // Held while numbering and fanning out, so listeners see seq order.
    publish: Mutex<()>,
    listeners: RwLock<Vec<Listener>>,
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventLog")
            .field("frames", &self.frames.read().len())
            .field("listeners", &self.listeners.read().len())
            .finish()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, emitted_at: Millis, payload: FramePayload) -> u64 {
        let _guard = self.publish.lock();
        let frame = {
            let mut frames = self.frames.write();
            let frame = Arc::new(EventFrame {
                seq: frames.len() as u64,
                emitted_at,
                payload,
            });
            frames.push(frame.clone());
            frame
        };
        for l in self.listeners.read().iter() {
            l(&frame);
        }
        frame.seq
    }

    /// Registers a listener and returns the seq of the next frame it will see.
    /// Frames before that seq are available from `since`.
    pub fn listen(&self, listener: Listener) -> u64 {
        let _guard = self.publish.lock();
        self.listeners.write().push(listener);
        self.frames.read().len() as u64
    }

    pub fn since(&self, from_seq: u64) -> Vec<Arc<EventFrame>> {
        self.frames
            .read()
            .iter()
            .skip(from_seq as usize)
            .cloned()
            .collect()
    }

    /// Frames in `[from_seq, to_seq)`.
    pub fn range(&self, from_seq: u64, to_seq: u64) -> Vec<Arc<EventFrame>> {
        let frames = self.frames.read();
        let to = (to_seq as usize).min(frames.len());
        let from = (from_seq as usize).min(to);
        frames[from..to].to_vec()
    }

    pub fn next_seq(&self) -> u64 {
        self.frames.read().len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn gap() -> FramePayload {
        FramePayload::Gap {
            missed_from: 0,
            missed_to: 0,
        }
    }

    #[test]
    fn listeners_see_frames_in_order() {
        let log = EventLog::new();
        log.publish(0, gap());
        let last = Arc::new(AtomicU64::new(u64::MAX));
        let seen = last.clone();
        let start = log.listen(Box::new(move |f| {
            let prev = seen.swap(f.seq, Ordering::SeqCst);
            assert!(prev == u64::MAX || prev + 1 == f.seq);
        }));
        assert_eq!(start, 1);
        for _ in 0..5 {
            log.publish(1, gap());
        }
        assert_eq!(last.load(Ordering::SeqCst), 5);
        assert_eq!(log.since(4).len(), 2);
        assert_eq!(log.range(1, 3).len(), 2);
    }
}
