#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::{to_canonical_bytes, Query};

fuzz_target!(|data: &[u8]| {
    if let Ok(q) = serde_json::from_slice::<Query>(data) {
        let bytes = to_canonical_bytes(&q).expect("query encodes");
        let back: Query = serde_json::from_slice(&bytes).expect("canonical query parses");
        assert_eq!(back, q);
        assert_eq!(back.canonical_string(), q.canonical_string());
    }
});
