#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use smcgate_core::{Ciphertext, Identity, Validity};

fn identity() -> &'static Identity {
    static ID: OnceLock<Identity> = OnceLock::new();
    ID.get_or_init(|| Identity::self_signed("client", "fuzz", Validity::new(0, u64::MAX / 2).unwrap()))
}

fuzz_target!(|data: &[u8]| {
    if let Ok(ct) = serde_json::from_slice::<Ciphertext>(data) {
        let _ = identity().decrypt(&ct);
    }
});
