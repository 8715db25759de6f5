#![no_main]
use libfuzzer_sys::fuzz_target;
use tirs_core::harness::{summary_from_csv, RolloutLog};

fuzz_target!(|data: &str| {
    if let Ok(log) = RolloutLog::from_csv(data) {
        let again = RolloutLog::from_csv(&log.to_csv()).expect("re-parse");
        assert_eq!(again.records.len(), log.records.len());
    }
    let _ = summary_from_csv(data);
});
