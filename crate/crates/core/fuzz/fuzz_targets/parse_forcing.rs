#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::forcing::{parse_forcing, write_forcing};

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = parse_forcing(data, "fuzz") {
        assert!(!series.records.is_empty());
        assert!(series.records.iter().all(|r| r.is_valid()));
        let mut buf = Vec::new();
        write_forcing(&mut buf, &series).unwrap();
        let again = parse_forcing(buf.as_slice(), "fuzz").unwrap();
        assert_eq!(again.records, series.records);
    }
});
