#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use smcgate_peer::PeerConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = PeerConfig::parse(text, Path::new("/nonexistent")) {
        let _ = c.settings();
    }
});
