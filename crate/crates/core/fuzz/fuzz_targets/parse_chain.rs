#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::files::{parse_chain, write_chain};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_chain(data, "fuzz") {
        let mut buf = Vec::new();
        write_chain(&mut buf, &records).unwrap();
        let _ = parse_chain(buf.as_slice(), "fuzz").unwrap();
    }
});
