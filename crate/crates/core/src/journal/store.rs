use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::actor::ActorId;
use crate::clock::Millis;
use crate::journal::filter::JournalFilter;
use crate::journal::interchange::{decode_line, to_jsonl, verify_records};
use crate::journal::payload::Payload;
use crate::journal::record::{Hash32, JournalRecord, RecordKind, RecordRef};
use crate::journal::replay::{replay_records, ReplayedState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JournalError {
    #[error("unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt chain for '{instance_id}' at seq {first_bad_seq}")]
    CorruptChain { instance_id: String, first_bad_seq: u64 },
    #[error("malformed filter: {0}")]
    MalformedFilter(String),
    #[error("import failed at line {line}: {reason}")]
    Import { line: usize, reason: String },
    #[error("inconsistent journal for '{instance_id}' at seq {seq}: {reason}")]
    Inconsistent {
        instance_id: String,
        seq: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Valid,
    Invalid { first_bad_seq: u64 },
}

impl ChainStatus {
    pub fn is_valid(self) -> bool {
        self == ChainStatus::Valid
    }
}

type Stream = Arc<RwLock<Vec<Arc<JournalRecord>>>>;

/// In-memory journal with an optional write-through JSONL sink.
///
/// Appends to one stream are serialized by that stream's lock. Readers clone
/// `Arc`s out under short read locks and never see a partial record.
#[derive(Default)]
pub struct JournalStore {
    streams: RwLock<HashMap<String, Stream>>,
    arrival: RwLock<Vec<Arc<JournalRecord>>>,
    dedup: Mutex<HashMap<String, RecordRef>>,
    sink: Option<Mutex<Box<dyn Write + Send>>>,
}

impl fmt::Debug for JournalStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JournalStore")
            .field("streams", &self.streams.read().len())
            .field("records", &self.arrival.read().len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl JournalStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every accepted record is written as one line and flushed before the
    /// append returns. A failed write rejects the append.
    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(Mutex::new(sink)),
            ..Self::default()
        }
    }

    /// Adds a write-through sink to a store that was filled from existing
    /// records. Records already held are not written again.
    pub fn attach_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(Mutex::new(sink));
        self
    }

    /// Creates an empty stream. Returns false if it already exists.
    pub fn open_stream(&self, stream: &str) -> bool {
        let mut streams = self.streams.write();
        if streams.contains_key(stream) {
            return false;
        }
        streams.insert(stream.to_owned(), Arc::default());
        true
    }

    pub fn has_stream(&self, stream: &str) -> bool {
        self.streams.read().contains_key(stream)
    }

    fn stream(&self, stream: &str) -> Result<Stream, JournalError> {
        self.streams
            .read()
            .get(stream)
            .cloned()
            .ok_or_else(|| JournalError::UnknownInstance(stream.to_owned()))
    }

    pub fn append(
        &self,
        stream: &str,
        kind: RecordKind,
        actor: &ActorId,
        timestamp: Millis,
        payload: Value,
    ) -> Result<JournalRecord, JournalError> {
        self.append_keyed(None, stream, kind, actor, timestamp, payload)
    }

    pub fn append_payload(
        &self,
        stream: &str,
        actor: &ActorId,
        timestamp: Millis,
        payload: &Payload,
    ) -> Result<JournalRecord, JournalError> {
        self.append(stream, payload.kind(), actor, timestamp, payload.to_value())
    }

    /// Appends unless `dedup_key` was already used, in which case the record
    /// first appended under that key is returned unchanged.
    pub fn append_keyed(
        &self,
        dedup_key: Option<&str>,
        stream: &str,
        kind: RecordKind,
        actor: &ActorId,
        timestamp: Millis,
        payload: Value,
    ) -> Result<JournalRecord, JournalError> {
        Payload::decode(kind, &payload).map_err(JournalError::SchemaViolation)?;
        let handle = self.stream(stream)?;
        let mut records = handle.write();

        if let Some(key) = dedup_key {
            if let Some(existing) = self.dedup.lock().get(key) {
                let earlier = self.stream(&existing.instance_id)?;
                let r = if Arc::ptr_eq(&earlier, &handle) {
                    records[existing.seq as usize].clone()
                } else {
                    earlier.read()[existing.seq as usize].clone()
                };
                return Ok((*r).clone());
            }
        }

        let seq = records.len() as u64;
        let prev = records.last().map(|r| r.record_hash).unwrap_or(Hash32::ZERO);
        let record = Arc::new(JournalRecord::sealed(
            seq,
            stream,
            kind,
            actor.clone(),
            timestamp,
            payload,
            prev,
        ));

        if let Some(sink) = &self.sink {
            let mut line = record.canonical_line();
            line.push('\n');
            let mut w = sink.lock();
            w.write_all(line.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| JournalError::StorageFailure(e.to_string()))?;
        }

        records.push(record.clone());
        if let Some(key) = dedup_key {
            self.dedup.lock().insert(key.to_owned(), record.id());
        }
        self.arrival.write().push(record.clone());
        Ok((*record).clone())
    }

    pub fn stream_records(&self, stream: &str) -> Result<Vec<JournalRecord>, JournalError> {
        let handle = self.stream(stream)?;
        let records = handle.read();
        Ok(records.iter().map(|r| (**r).clone()).collect())
    }

    pub fn stream_len(&self, stream: &str) -> Result<usize, JournalError> {
        Ok(self.stream(stream)?.read().len())
    }

    pub fn verify_chain(&self, stream: &str) -> Result<ChainStatus, JournalError> {
        let handle = self.stream(stream)?;
        let records = handle.read();
        Ok(verify_records(records.iter().map(|r| &**r)))
    }

    /// Records matching `filter`, in `(instance_id, seq)` order.
    pub fn query(&self, filter: &JournalFilter) -> Result<Vec<JournalRecord>, JournalError> {
        filter.validate().map_err(JournalError::MalformedFilter)?;
        let mut names: Vec<(String, Stream)> = match &filter.instance_id {
            Some(id) => match self.streams.read().get(id) {
                Some(s) => vec![(id.clone(), s.clone())],
                None => Vec::new(),
            },
            None => self
                .streams
                .read()
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        names.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = Vec::new();
        for (_, s) in names {
            let snapshot: Vec<Arc<JournalRecord>> = s.read().clone();
            out.extend(
                snapshot
                    .iter()
                    .filter(|r| filter.matches(r))
                    .map(|r| (**r).clone()),
            );
        }
        Ok(out)
    }

    /// Every record in arrival order.
    pub fn all_records(&self) -> Vec<JournalRecord> {
        self.arrival.read().iter().map(|r| (**r).clone()).collect()
    }

    /// Arrival-ordered records from position `from` on.
    pub fn records_since(&self, from: usize) -> Vec<JournalRecord> {
        let arrival = self.arrival.read();
        arrival
            .iter()
            .skip(from)
            .map(|r| (**r).clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.arrival.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stream_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.streams.read().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn replay_state(&self, stream: &str) -> Result<ReplayedState, JournalError> {
        let handle = self.stream(stream)?;
        let records: Vec<JournalRecord> = handle.read().iter().map(|r| (**r).clone()).collect();
        if let ChainStatus::Invalid { first_bad_seq } = verify_records(&records) {
            return Err(JournalError::CorruptChain {
                instance_id: stream.to_owned(),
                first_bad_seq,
            });
        }
        replay_records(&records)
    }

    pub fn export_stream(&self, stream: &str) -> Result<String, JournalError> {
        let handle = self.stream(stream)?;
        let records = handle.read();
        Ok(to_jsonl(records.iter().map(|r| &**r)))
    }

    /// All streams, arrival order.
    pub fn export_all(&self) -> String {
        let arrival = self.arrival.read();
        to_jsonl(arrival.iter().map(|r| &**r))
    }

    /// Imports interchange lines. Each record must extend its stream's chain
    /// exactly; the first offending line aborts the import, leaving earlier
    /// lines applied.
    pub fn import_jsonl(&self, text: &str) -> Result<usize, JournalError> {
        let mut count = 0;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| JournalError::Import { line: i + 1, reason };
            let record = decode_line(line).map_err(err)?;
            Payload::decode(record.kind, &record.payload).map_err(err)?;
            self.open_stream(&record.instance_id);
            let handle = self.stream(&record.instance_id)?;
            let mut records = handle.write();
            let expected_prev = records.last().map(|r| r.record_hash).unwrap_or(Hash32::ZERO);
            if record.seq != records.len() as u64 {
                return Err(err(format!(
                    "expected seq {} for '{}', got {}",
                    records.len(),
                    record.instance_id,
                    record.seq
                )));
            }
            if record.prev_hash != expected_prev || record.compute_hash() != record.record_hash {
                return Err(err(format!("chain broken at seq {}", record.seq)));
            }
            if let Some(sink) = &self.sink {
                let mut w = sink.lock();
                w.write_all(line.as_bytes())
                    .and_then(|_| w.write_all(b"\n"))
                    .and_then(|_| w.flush())
                    .map_err(|e| JournalError::StorageFailure(e.to_string()))?;
            }
            let record = Arc::new(record);
            records.push(record.clone());
            self.arrival.write().push(record);
            count += 1;
        }
        Ok(count)
    }
}
