#![no_main]

use agentgov_core::journal::filter::parse_query;
use agentgov_core::journal::decode_line;
use libfuzzer_sys::fuzz_target;

const RECORD: &str = include_str!("../corpus/journal_line/seed-transition");

fuzz_target!(|data: &[u8]| {
    let Ok(query) = std::str::from_utf8(data) else { return };
    if let Ok(filter) = parse_query(query) {
        let record = decode_line(RECORD.trim_end()).unwrap();
        let _ = filter.matches(&record);
    }
});
