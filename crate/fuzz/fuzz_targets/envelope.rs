#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::wire::Envelope;

fuzz_target!(|data: &[u8]| {
    if let Ok(env) = serde_json::from_slice::<Envelope>(data) {
        let _ = env.payload.kind();
        let _ = env.signing_input();
    }
});
