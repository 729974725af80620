#![no_main]

use libfuzzer_sys::fuzz_target;
use omq_core::io::parse_abox;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(a) = parse_abox(s) {
        let again = parse_abox(&a.to_string()).expect("displayed ABox parses");
        assert_eq!(again, a);
    }
});
