#![no_main]

use agentgov_core::journal::decode_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    // Anything accepted must be canonical, so it re-encodes to itself.
    if let Ok(record) = decode_line(line) {
        assert_eq!(record.canonical_line(), line);
    }
});
