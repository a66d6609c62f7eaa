#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::summary::parse_quantiles;

fuzz_target!(|data: &[u8]| {
    if let Ok(summary) = parse_quantiles(data, "fuzz") {
        let _ = summary.check_ordering();
        let _ = summary.days();
    }
});
