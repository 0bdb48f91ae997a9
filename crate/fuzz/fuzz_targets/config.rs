#![no_main]

use libfuzzer_sys::fuzz_target;
use pairfiber::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = parse_config(text) {
            // A parsed config renders to text that parses to the same parameters.
            let again = parse_config(&c.params.to_config_string()).expect("rendered config parses");
            assert_eq!(again.params, c.params);
        }
    }
});
