#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use smcgate_gateway::GatewayConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = GatewayConfig::parse(text, Path::new("/nonexistent")) {
        let _ = c.policy();
        let _ = c.settings();
    }
});
