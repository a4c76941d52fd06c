#![no_main]

use libfuzzer_sys::fuzz_target;
use smpi::datatype::DatatypeTree;

fuzz_target!(|data: &[u8]| {
    if let Ok(tree) = DatatypeTree::from_canonical(data) {
        assert_eq!(tree.canonical_encoding(), data);
        let _ = tree.commit();
    }
});
