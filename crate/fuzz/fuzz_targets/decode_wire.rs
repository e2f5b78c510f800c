#![no_main]
use libfuzzer_sys::fuzz_target;
use ndc_core::tagio::{decode_wire, encode_wire};

fuzz_target!(|data: &[u8]| {
    if let Ok(stream) = decode_wire(data) {
        let bytes = encode_wire(&stream, 7).unwrap();
        assert_eq!(decode_wire(&bytes).unwrap(), stream);
    }
});
