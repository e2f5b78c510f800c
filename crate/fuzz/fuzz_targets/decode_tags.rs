#![no_main]
use libfuzzer_sys::fuzz_target;
use ndc_core::tagio::{decode_tags, write_tags};

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must encode back to the same bytes.
    if let Ok(stream) = decode_tags(data) {
        let mut out = Vec::new();
        write_tags(&stream, &mut out).unwrap();
        assert_eq!(decode_tags(&out).unwrap(), stream);
    }
});
