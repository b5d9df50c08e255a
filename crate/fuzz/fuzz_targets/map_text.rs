#![no_main]

use libfuzzer_sys::fuzz_target;
use pepper_core::TileMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = TileMap::from_text(text) {
            assert_eq!(TileMap::from_text(&map.to_text()).unwrap(), map);
        }
    }
});
