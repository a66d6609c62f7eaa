#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::files::parse_draws;

fuzz_target!(|data: &[u8]| {
    if let Ok(draws) = parse_draws(data, "fuzz") {
        assert!(draws.iter().all(|d| !d.trajectory.is_empty()));
    }
});
