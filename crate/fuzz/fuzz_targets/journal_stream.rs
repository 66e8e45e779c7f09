#![no_main]

use agentgov_core::journal::{verify_stream_lines, ChainStatus};
use agentgov_core::JournalStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let status = verify_stream_lines(text);
    let store = JournalStore::new();
    if store.import_jsonl(text).is_err() {
        return;
    }
    for stream in store.stream_names() {
        assert_eq!(store.verify_chain(&stream).unwrap(), ChainStatus::Valid, "{stream}");
    }
    // A clean single-stream import is a valid stream export.
    if store.stream_names().len() == 1 && !text.lines().any(str::is_empty) {
        assert_eq!(status, ChainStatus::Valid);
    }
    let again = JournalStore::new();
    again.import_jsonl(&store.export_all()).unwrap();
    assert_eq!(again.export_all(), store.export_all());
});
