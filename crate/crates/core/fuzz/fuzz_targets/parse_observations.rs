#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::obs::{parse_observations, write_observations};

fuzz_target!(|data: &[u8]| {
    if let Ok(obs) = parse_observations(data, "fuzz") {
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert_eq!(parse_observations(buf.as_slice(), "fuzz").unwrap(), obs);
    }
});
