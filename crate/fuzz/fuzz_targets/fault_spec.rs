#![no_main]

use agentgov_harness::FaultSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<FaultSpec>() {
        let shown = spec.to_string();
        assert_eq!(shown.parse::<FaultSpec>().unwrap(), spec, "{shown}");
    }
});
