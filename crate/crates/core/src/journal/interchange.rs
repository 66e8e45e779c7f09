//! JSONL interchange: one canonical record per line, hashes in lowercase hex.

use crate::journal::record::{Hash32, JournalRecord};
use crate::journal::store::ChainStatus;

/// Decodes one interchange line. The line must be exactly the canonical
/// serialization of the record it decodes to.
pub fn decode_line(line: &str) -> Result<JournalRecord, String> {
    let record: JournalRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if record.canonical_line() != line {
        return Err("line is not in canonical form".to_owned());
    }
    Ok(record)
}

/// Checks the chain links of consecutive records of one stream.
pub fn verify_records<'a>(records: impl IntoIterator<Item = &'a JournalRecord>) -> ChainStatus {
    let mut prev = Hash32::ZERO;
    let mut stream: Option<&str> = None;
    for (i, r) in records.into_iter().enumerate() {
        let i = i as u64;
        let same_stream = *stream.get_or_insert(r.instance_id.as_str()) == r.instance_id;
        if !same_stream || r.seq != i || r.prev_hash != prev || r.compute_hash() != r.record_hash {
            return ChainStatus::Invalid { first_bad_seq: i };
        }
        prev = r.record_hash;
    }
    ChainStatus::Valid
}

/// Verifies the lines of a single exported stream. A line that does not
/// decode counts as a broken link at its position.
pub fn verify_stream_lines(text: &str) -> ChainStatus {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match decode_line(line) {
            Ok(r) => records.push(r),
            Err(_) => {
                return match verify_records(&records) {
                    ChainStatus::Valid => ChainStatus::Invalid {
                        first_bad_seq: i as u64,
                    },
                    bad => bad,
                }
            }
        }
    }
    verify_records(&records)
}

pub fn to_jsonl<'a>(records: impl IntoIterator<Item = &'a JournalRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.canonical_line());
        out.push('\n');
    }
    out
}
