#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::to_canonical_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = serde_json::from_slice::<serde_json::Value>(data) {
        if let Ok(bytes) = to_canonical_bytes(&v) {
            let back: serde_json::Value = serde_json::from_slice(&bytes).expect("canonical output parses");
            assert_eq!(to_canonical_bytes(&back).unwrap(), bytes);
        }
    }
});
