#![no_main]

use libfuzzer_sys::fuzz_target;
use smpi::transport::FrameDecoder;

fuzz_target!(|data: &[u8]| {
    let Some((&split, rest)) = data.split_first() else { return };
    let mut d = FrameDecoder::new(1 << 16);
    for chunk in rest.chunks(usize::from(split).max(1)) {
        d.push(chunk);
        loop {
            match d.next_frame() {
                Ok(Some(m)) => assert_eq!(m.payload.len() as u64, m.envelope.payload_len),
                Ok(None) => break,
                Err(_) => return,
            }
        }
    }
});
