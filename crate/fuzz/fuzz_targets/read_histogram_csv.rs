#![no_main]
use libfuzzer_sys::fuzz_target;
use ndc_core::correlator::read_histogram_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = read_histogram_csv(text);
    }
});
