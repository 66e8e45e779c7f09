//! Append-only, hash-chained journals. One chain per stream (an agent instance
//! or a `kind/<name>` policy stream), plus a global arrival order.

pub mod filter;
pub mod interchange;
pub mod payload;
pub mod record;
pub mod replay;
pub mod store;

pub use filter::JournalFilter;
pub use interchange::{decode_line, verify_stream_lines};
pub use payload::Payload;
pub use record::{canonical_json, Hash32, JournalRecord, RecordKind, RecordRef};
pub use replay::{replay_records, ReplayedState};
pub use store::{ChainStatus, JournalError, JournalStore};

/// Stream name holding a kind's autonomy records.
pub fn kind_stream(agent_kind: &str) -> String {
    format!("kind/{agent_kind}")
}

pub fn is_kind_stream(stream: &str) -> bool {
    stream.starts_with("kind/")
}
