#![no_main]

use libfuzzer_sys::fuzz_target;
use omq_core::io::{parse_tbox, serialize_tbox};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = parse_tbox(s) {
        let again = parse_tbox(&serialize_tbox(&t)).expect("serialized TBox parses");
        assert_eq!(again, t);
    }
});
