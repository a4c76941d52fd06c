#![no_main]

use libfuzzer_sys::fuzz_target;
use smpi::transport::bootstrap::{format_hello, format_reg, format_table, parse_hello, parse_reg, parse_table, read_line};

fuzz_target!(|data: &[u8]| {
    let mut reader = data;
    while let Ok(line) = read_line(&mut reader, 4096) {
        if let Ok((rank, addr)) = parse_reg(&line) {
            assert_eq!(parse_reg(format_reg(rank, addr).trim_end()).unwrap(), (rank, addr));
        }
        if let Ok(addrs) = parse_table(&line) {
            assert_eq!(parse_table(format_table(&addrs).trim_end()).unwrap(), addrs);
        }
        if let Ok(rank) = parse_hello(&line) {
            assert_eq!(parse_hello(format_hello(rank).trim_end()).unwrap(), rank);
        }
    }
});
