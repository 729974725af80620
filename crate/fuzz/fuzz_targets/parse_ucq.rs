#![no_main]

use libfuzzer_sys::fuzz_target;
use omq_core::io::{parse_ucq, serialize_ucq};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(u) = parse_ucq(s) {
        let again = parse_ucq(&serialize_ucq(&u)).expect("serialized union parses");
        assert_eq!(again.canonical(), u.canonical());
    }
});
