#![no_main]

use glass::model::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&model);
        assert!(decode_checkpoint(&bytes).is_ok());
    }
});
