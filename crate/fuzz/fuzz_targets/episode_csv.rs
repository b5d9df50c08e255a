#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_core::pepper::read_episode_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_episode_csv(data);
});
