#![no_main]

use libfuzzer_sys::fuzz_target;
use smcgate_core::parse_predicate;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_predicate(text) {
        let again = parse_predicate(&p.to_string()).expect("rendered predicate parses");
        assert_eq!(again, p);
    }
});
