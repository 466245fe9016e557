#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::api::json_error_offset;
use smcgate_core::wire::ComputationEvent;

fuzz_target!(|data: &[u8]| {
    for line in data.split(|&b| b == b'\n') {
        match serde_json::from_slice::<ComputationEvent>(line) {
            Ok(ev) => {
                let _ = ev.is_final();
            }
            Err(e) => assert!(json_error_offset(line, &e) <= line.len()),
        }
    }
});
