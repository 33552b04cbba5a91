#![no_main]

use glass::data::{parse_annotations, write_annotations};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(anns) = parse_annotations(data) {
        let mut out = Vec::new();
        write_annotations(&anns, &mut out).expect("parsed annotations serialize");
        assert_eq!(parse_annotations(out.as_slice()).expect("round trip").len(), anns.len());
    }
});
