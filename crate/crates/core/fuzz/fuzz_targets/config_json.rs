#![no_main]

use libfuzzer_sys::fuzz_target;
use npzd_core::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = cfg.validate();
        let _ = cfg.hindcast_span(cfg.climatology_days);
        let _ = cfg.forecast_span(cfg.climatology_days);
        let _ = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    }
});
