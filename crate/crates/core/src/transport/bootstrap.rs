//! Line protocol used during TCP rendezvous and connection setup.
//!
//! ```text
//! rank -> coordinator   REG <rank> <host:port>\n
//! coordinator -> rank   TABLE <n> <host:port> ... \n
//! first line on a data connection   HELLO <rank>\n
//! ```

use std::io::Read;
use std::net::SocketAddr;

use crate::error::{Error, Result};

/// Longest bootstrap line accepted, newline included.
pub const MAX_LINE: usize = 1 << 20;

pub fn format_reg(rank: u32, addr: SocketAddr) -> String {
    format!("REG {rank} {addr}\n")
}

pub fn format_table(addrs: &[SocketAddr]) -> String {
    let mut line = format!("TABLE {}", addrs.len());
    for a in addrs {
        line.push(' ');
        line.push_str(&a.to_string());
    }
    line.push('\n');
    line
}

pub fn format_hello(rank: u32) -> String {
    format!("HELLO {rank}\n")
}

fn bad(what: &str, line: &str) -> Error {
    let shown: String = line.chars().take(80).collect();
    Error::Bootstrap(format!("malformed {what} line: {shown:?}"))
}

fn words<'a>(line: &'a str, verb: &str) -> Option<std::str::SplitAsciiWhitespace<'a>> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let mut it = line.split_ascii_whitespace();
    (it.next()? == verb).then_some(it)
}

pub fn parse_reg(line: &str) -> Result<(u32, SocketAddr)> {
    let mut it = words(line, "REG").ok_or_else(|| bad("REG", line))?;
    let rank = it.next().and_then(|r| r.parse().ok()).ok_or_else(|| bad("REG", line))?;
    let addr = it.next().and_then(|a| a.parse().ok()).ok_or_else(|| bad("REG", line))?;
    if it.next().is_some() {
        return Err(bad("REG", line));
    }
    Ok((rank, addr))
}

pub fn parse_table(line: &str) -> Result<Vec<SocketAddr>> {
    let mut it = words(line, "TABLE").ok_or_else(|| bad("TABLE", line))?;
    let n: usize = it.next().and_then(|n| n.parse().ok()).ok_or_else(|| bad("TABLE", line))?;
    let addrs = it
        .map(|a| a.parse().map_err(|_| bad("TABLE", line)))
        .collect::<Result<Vec<SocketAddr>>>()?;
    if addrs.len() != n || n == 0 {
        return Err(Error::Bootstrap(format!(
            "TABLE announces {n} entries but carries {}",
            addrs.len()
        )));
    }
    Ok(addrs)
}

pub fn parse_hello(line: &str) -> Result<u32> {
    let mut it = words(line, "HELLO").ok_or_else(|| bad("HELLO", line))?;
    let rank = it.next().and_then(|r| r.parse().ok()).ok_or_else(|| bad("HELLO", line))?;
    if it.next().is_some() {
        return Err(bad("HELLO", line));
    }
    Ok(rank)
}

/// Reads one `\n`-terminated line byte by byte, so nothing past the newline is
/// consumed from the stream.
pub fn read_line(reader: &mut impl Read, limit: usize) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match reader.read(&mut byte) {
            Ok(0) => return Err(Error::Bootstrap("connection closed during rendezvous".into())),
            Ok(_) => {
                line.push(byte[0]);
                if byte[0] == b'\n' {
                    break;
                }
                if line.len() >= limit {
                    return Err(Error::Bootstrap(format!("bootstrap line exceeds {limit} bytes")));
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Bootstrap(format!("rendezvous read failed: {e}"))),
        }
    }
    String::from_utf8(line).map_err(|_| Error::Bootstrap("bootstrap line is not UTF-8".into()))
}
