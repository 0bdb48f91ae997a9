#![no_main]

use libfuzzer_sys::fuzz_target;
use pairfiber::io::csv::{grid_function_csv, parse_grid_function_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((grid, f)) = parse_grid_function_csv(text) {
            let (g2, f2) = parse_grid_function_csv(&grid_function_csv(&grid, &f).expect("parsed function writes"))
                .expect("written CSV parses");
            assert_eq!(g2.n(), grid.n());
            assert_eq!(f2.values(), f.values());
        }
    }
});
