#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_core::WorldModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = WorldModel::from_text(text) {
            assert_eq!(WorldModel::from_text(&model.to_text()).unwrap(), model);
        }
    }
});
