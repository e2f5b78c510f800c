#![no_main]
use libfuzzer_sys::fuzz_target;
use ndc_core::config::{parse_config, write_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        let again = parse_config(&write_config(&cfg.experiment, cfg.seed)).unwrap();
        assert_eq!(again.experiment, cfg.experiment);
        assert_eq!(again.seed, cfg.seed);
    }
});
