#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::Certificate;

fuzz_target!(|data: &[u8]| {
    if let Ok(cert) = serde_json::from_slice::<Certificate>(data) {
        let _ = cert.fingerprint();
        let _ = cert.verifying_key();
        let _ = cert.valid_at(0);
    }
});
