#![no_main]

use libfuzzer_sys::fuzz_target;
use smpi::serialize::{from_bytes, to_bytes};

type Value = Vec<(String, Vec<(i64, bool)>)>;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = from_bytes::<Value>(data) {
        assert_eq!(to_bytes(&v), data);
    }
    let _ = from_bytes::<(u32, String)>(data);
    let _ = from_bytes::<Vec<Vec<f64>>>(data);
});
