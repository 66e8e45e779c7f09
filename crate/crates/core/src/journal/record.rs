//! Journal records, their canonical serialization and the chain hash.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::actor::ActorId;
use crate::clock::Millis;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", self.to_hex())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Hash32 {
    type Err = String;

    /// Accepts only 64 lowercase hex digits, the interchange spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(format!("expected 64 lowercase hex digits, got {:?}", s));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Hash32(out))
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKind {
    StateTransition,
    WorkProgress,
    #[serde(rename = "HITL")]
    Hitl,
    Decision,
    Autonomy,
    Anomaly,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::StateTransition,
        RecordKind::WorkProgress,
        RecordKind::Hitl,
        RecordKind::Decision,
        RecordKind::Autonomy,
        RecordKind::Anomaly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::StateTransition => "StateTransition",
            RecordKind::WorkProgress => "WorkProgress",
            RecordKind::Hitl => "HITL",
            RecordKind::Decision => "Decision",
            RecordKind::Autonomy => "Autonomy",
            RecordKind::Anomaly => "Anomaly",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown record kind '{s}'"))
    }
}

/// Position of a record: its stream and sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    pub instance_id: String,
    pub seq: u64,
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.instance_id, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalRecord {
    pub seq: u64,
    pub instance_id: String,
    pub kind: RecordKind,
    pub actor: ActorId,
    pub timestamp: Millis,
    pub payload: Value,
    pub prev_hash: Hash32,
    pub record_hash: Hash32,
}

impl JournalRecord {
    /// Builds a record whose hash is computed from its contents and `prev_hash`.
    pub fn sealed(
        seq: u64,
        instance_id: impl Into<String>,
        kind: RecordKind,
        actor: ActorId,
        timestamp: Millis,
        payload: Value,
        prev_hash: Hash32,
    ) -> Self {
        let mut record = JournalRecord {
            seq,
            instance_id: instance_id.into(),
            kind,
            actor,
            timestamp,
            payload,
            prev_hash,
            record_hash: Hash32::ZERO,
        };
        record.record_hash = record.compute_hash();
        record
    }

    pub fn id(&self) -> RecordRef {
        RecordRef {
            instance_id: self.instance_id.clone(),
            seq: self.seq,
        }
    }

    /// Canonical serialization of every field except the two hashes.
    pub fn hashed_body(&self) -> String {
        let body = serde_json::json!({
            "actor": self.actor,
            "instance_id": self.instance_id,
            "kind": self.kind,
            "payload": self.payload,
            "seq": self.seq,
            "timestamp": self.timestamp,
        });
        canonical_json(&body)
    }

    /// SHA-256 over `prev_hash || hashed_body`.
    pub fn compute_hash(&self) -> Hash32 {
        let mut hasher = Sha256::new();
        hasher.update(self.prev_hash.0);
        hasher.update(self.hashed_body().as_bytes());
        Hash32(hasher.finalize().into())
    }

    /// One interchange line, without the trailing newline.
    pub fn canonical_line(&self) -> String {
        let value = serde_json::to_value(self).expect("journal records always serialize");
        canonical_json(&value)
    }
}

/// JSON with lexicographically sorted object keys and no insignificant whitespace.
///
/// Sorting is done here rather than relying on the map type, so the output does
/// not depend on serde_json feature flags.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
            out.push_str(&serde_json::to_string(value).expect("scalar serializes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}
