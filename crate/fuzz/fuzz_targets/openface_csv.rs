#![no_main]

use glass::data::{parse_openface_csv, ColumnMap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(seq) = parse_openface_csv(data, &ColumnMap::default(), 30.0) {
        assert_eq!(seq.frames.len(), seq.len());
    }
});
