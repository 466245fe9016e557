#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use smcgate_client::ClientConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = ClientConfig::parse(text, Path::new("/nonexistent"));
});
