#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::wire::verify_entry;
use smcgate_peer::LogRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<LogRecord>(data) {
        let gateway = r.entry.request.certificate.clone();
        let _ = verify_entry(&r.entry, &gateway);
    }
});
