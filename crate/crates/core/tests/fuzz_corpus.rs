//! Replays the checked-in fuzz corpus through the same entry points and
//! properties as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use ndc_core::config::{parse_config, write_config};
use ndc_core::correlator::read_histogram_csv;
use ndc_core::tagio::{decode_tags, decode_wire, encode_wire, write_tags};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn decode_tags_seeds() {
    let mut decoded = 0;
    for (name, data) in corpus("decode_tags") {
        if let Ok(stream) = decode_tags(&data) {
            let mut out = Vec::new();
            write_tags(&stream, &mut out).unwrap();
            assert_eq!(out, data, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded > 0);
}

#[test]
fn decode_wire_seeds() {
    let mut decoded = 0;
    for (name, data) in corpus("decode_wire") {
        if let Ok(stream) = decode_wire(&data) {
            let bytes = encode_wire(&stream, 7).unwrap();
            assert_eq!(decode_wire(&bytes).unwrap(), stream, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded > 0);
}

#[test]
fn parse_config_seeds() {
    let mut parsed = 0;
    for (name, data) in corpus("parse_config") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        if let Ok(cfg) = parse_config(text) {
            let again = parse_config(&write_config(&cfg.experiment, cfg.seed)).unwrap();
            assert_eq!(again, cfg, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed > 0);
}

#[test]
fn read_histogram_csv_seeds() {
    let mut parsed = 0;
    for (_, data) in corpus("read_histogram_csv") {
        if let Ok(text) = std::str::from_utf8(&data) {
            parsed += read_histogram_csv(text).is_ok() as usize;
        }
    }
    assert!(parsed > 0);
}
