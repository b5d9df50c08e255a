#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = ExperimentConfig::from_text(text) {
            let dumped = config.dump();
            assert_eq!(ExperimentConfig::from_text(&dumped).unwrap().dump(), dumped);
        }
    }
});
