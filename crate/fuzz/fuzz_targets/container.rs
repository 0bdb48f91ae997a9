#![no_main]

use libfuzzer_sys::fuzz_target;
use pairfiber::io::cache::decode_record;
use pairfiber::io::container::{decode, encode, Payload};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode(data) {
        let bytes = encode(&p).expect("decoded payload re-encodes");
        assert_eq!(bytes.as_slice(), data);
        if let Payload::RealVector(v) = &p {
            let _ = decode_record(v);
        }
    }
});
