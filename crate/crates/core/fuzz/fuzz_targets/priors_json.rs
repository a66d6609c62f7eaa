#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::prior::PriorSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = PriorSpec::from_json(text) {
        let again = PriorSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
    }
});
