#![no_main]

use libfuzzer_sys::fuzz_target;
use smpi::transport::frame::{decode_header, encode_header};

fuzz_target!(|data: &[u8]| {
    if let Ok(env) = decode_header(data, 1 << 20) {
        // Anything accepted re-encodes to the same 44 bytes.
        assert_eq!(&encode_header(&env)[..], &data[..44]);
    }
});
