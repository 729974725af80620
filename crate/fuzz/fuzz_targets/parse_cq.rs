#![no_main]

use libfuzzer_sys::fuzz_target;
use omq_core::io::{parse_cq, parse_cq_internal, serialize_cq};
use omq_core::structure::classify;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = parse_cq(s) {
        let again = parse_cq(&serialize_cq(&q)).expect("serialized query parses");
        assert_eq!(again.code(), q.code());
        let _ = classify(&q);
    }
    let _ = parse_cq_internal(s);
});
