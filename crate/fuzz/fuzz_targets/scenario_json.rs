#![no_main]
use libfuzzer_sys::fuzz_target;
use tirs_core::scenario::ScenarioConfig;

// Parsing and validation must reject bad files without panicking; a file
// that validates must survive a round trip.
fuzz_target!(|data: &str| {
    if let Ok(cfg) = ScenarioConfig::from_json(data) {
        let again = ScenarioConfig::from_json(&cfg.to_json()).expect("re-parse");
        assert_eq!(again.map_hash(), cfg.map_hash());
    }
});
