#![no_main]

use glass::data::{parse_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_manifest(data) {
        let mut out = Vec::new();
        if write_manifest(&entries, &mut out).is_ok() {
            assert_eq!(parse_manifest(out.as_slice()).expect("round trip"), entries);
        }
    }
});
