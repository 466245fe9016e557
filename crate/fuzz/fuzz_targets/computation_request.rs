#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use smcgate_core::checks::RequestTrust;
use smcgate_core::{check_computation_request, ComputationRequest, Identity, TrustStore, Validity};

fn trust() -> &'static RequestTrust {
    static TRUST: OnceLock<RequestTrust> = OnceLock::new();
    TRUST.get_or_init(|| {
        let ca = Identity::self_signed("ca", "", Validity::new(0, u64::MAX / 2).unwrap());
        let anchors = TrustStore::new([ca.certificate().clone()]).unwrap();
        RequestTrust {
            client_anchors: anchors.clone(),
            authority_anchors: anchors,
            authorities: vec![ca.certificate().clone()],
        }
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<ComputationRequest>(data) {
        let _ = check_computation_request(&r, trust(), r.timestamp);
    }
});
