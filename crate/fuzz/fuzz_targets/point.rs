#![no_main]

use libfuzzer_sys::fuzz_target;
use pairfiber::config::{parse_angle, parse_point, parse_repulsion};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Some(a) = parse_angle(s) {
            assert!(a.is_finite());
        }
        let _ = parse_point(s);
        let _ = parse_repulsion(s);
    }
});
