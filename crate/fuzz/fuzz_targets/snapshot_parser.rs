#![no_main]

use bubblelab::reduction::snapshot::{parse_snapshot, write_snapshot};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(field) = parse_snapshot(text) {
        let again = parse_snapshot(&write_snapshot(&field)).expect("written snapshot parses");
        assert_eq!(write_snapshot(&again), write_snapshot(&field));
    }
});
