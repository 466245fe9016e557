#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::{Fingerprint, Preprocessor, Preselector};
use smcgate_gateway::policy::TimeOfDay;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = text.parse::<Fingerprint>() {
        assert_eq!(f.to_string().parse::<Fingerprint>().unwrap(), f);
    }
    let _ = text.parse::<TimeOfDay>();
    let _ = text.parse::<Preselector>();
    let _ = text.parse::<Preprocessor>();
});
