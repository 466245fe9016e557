#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::crypto::verify;
use smcgate_core::GrantRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<GrantRequest>(data) {
        let _ = verify(&r.sig_client, &r.certificate, &r.signing_input());
    }
});
