#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_core::{Categorical, Ensemble};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ens) = Ensemble::from_text(text) {
            let belief = Categorical::uniform(ens.dims().n_states);
            for a in 0..ens.dims().n_actions {
                assert!(ens.disagreement(&belief, a) >= 0.0);
            }
        }
    }
});
