#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::files::{parse_trajectory, write_trajectory};

fuzz_target!(|data: &[u8]| {
    if let Ok((first, states)) = parse_trajectory(data, "fuzz") {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, first, &states).unwrap();
        let _ = parse_trajectory(buf.as_slice(), "fuzz").unwrap();
    }
});
