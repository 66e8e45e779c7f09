#![no_main]

use agentgov_server::ServerConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ServerConfig::from_toml_str(text) {
        assert!(cfg.invariant_failures().is_empty());
        let _ = cfg.kernel_config();
        let _ = cfg.actors();
        let _ = cfg.policies();
    }
});
