#![no_main]
use libfuzzer_sys::fuzz_target;
use tirs_core::impact_map::{parse_dataset, write_dataset};

fuzz_target!(|data: &str| {
    if let Ok(d) = parse_dataset(data) {
        let text = write_dataset(&d);
        let again = parse_dataset(&text).expect("re-parse");
        assert_eq!(write_dataset(&again), text);
    }
});
