#![no_main]

use libfuzzer_sys::fuzz_target;
use omq_core::io::{parse_concept, parse_concept_internal};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = parse_concept(s) {
        // the public grammar is a subset of the internal one
        assert_eq!(parse_concept_internal(s).ok(), Some(c.clone()));
        let _ = c.code();
    }
    let _ = parse_concept_internal(s);
});
