#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_core::preferences::read_history_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(history) = read_history_csv(data) {
        for counts in &history {
            assert!(counts.counts().iter().all(|&c| c > 0.0));
        }
    }
});
