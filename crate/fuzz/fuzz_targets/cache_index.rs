#![no_main]

use libfuzzer_sys::fuzz_target;
use pairfiber::io::cache::{parse_index, render_index};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_index(text) {
            let map = entries.iter().map(|e| (e.key.clone(), e.clone())).collect();
            let back = parse_index(&render_index(&map)).expect("rendered index parses");
            assert_eq!(back.len(), entries.len());
        }
    }
});
