//! TCP backend: one OS process per rank, coordinator rendezvous on rank 0,
//! lazily opened one-way data connections.
//!
//! Each ordered pair of ranks uses its own connection, opened by the sender
//! and announced with a `HELLO` line. Receivers only ever read and senders
//! only ever write, so a closed connection never discards unread frames.

use std::io::{ErrorKind, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::bootstrap::{self, MAX_LINE};
use super::frame::{encode_header, FrameDecoder};
use super::{backoff, Endpoint, Envelope, Event, Mailbox, Message, TransportStats, DEFAULT_MAX_PAYLOAD};
use crate::error::{Error, Result};

const READ_CHUNK: usize = 64 * 1024;
const HELLO_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct TcpConfig {
    pub rank: u32,
    pub world_size: u32,
    /// `host:port` of the coordinator, which rank 0 hosts.
    pub coordinator: String,
    /// Limit for rendezvous and for opening data connections.
    pub timeout: Duration,
    pub max_payload: u64,
    /// Drive socket reads from a background thread. Off by default.
    pub progress_thread: bool,
}

impl TcpConfig {
    pub fn new(rank: u32, world_size: u32, coordinator: impl Into<String>) -> Self {
        TcpConfig {
            rank,
            world_size,
            coordinator: coordinator.into(),
            timeout: Duration::from_secs(10),
            max_payload: DEFAULT_MAX_PAYLOAD,
            progress_thread: false,
        }
    }
}

#[derive(Debug)]
struct Conn {
    stream: TcpStream,
    peer: Option<u32>,
    hello: Vec<u8>,
    decoder: FrameDecoder,
}

#[derive(Debug)]
struct Io {
    listener: TcpListener,
    out: Vec<Option<TcpStream>>,
    incoming: Vec<Conn>,
    scratch: Vec<u8>,
}

#[derive(Debug)]
struct Inner {
    rank: u32,
    size: u32,
    addrs: Vec<SocketAddr>,
    timeout: Duration,
    max_payload: u64,
    mailbox: Mailbox,
    stats: TransportStats,
    closed: Vec<AtomicBool>,
    io: Mutex<Io>,
}

#[derive(Debug)]
pub struct TcpEndpoint {
    inner: Arc<Inner>,
    progress: Option<(Arc<AtomicBool>, JoinHandle<()>)>,
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(|e| Error::Bootstrap(format!("cannot resolve coordinator {addr:?}: {e}")))?
        .next()
        .ok_or_else(|| Error::Bootstrap(format!("coordinator {addr:?} resolves to nothing")))
}

fn remaining(deadline: Instant) -> Option<Duration> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
}

impl TcpEndpoint {
    /// Binds a listener, performs rendezvous and returns the endpoint. Data
    /// connections are opened on first send.
    pub fn connect(config: TcpConfig) -> Result<TcpEndpoint> {
        if config.world_size == 0 || config.rank >= config.world_size {
            return Err(Error::Bootstrap(format!(
                "rank {} outside world of {}",
                config.rank, config.world_size
            )));
        }
        let coord = resolve(&config.coordinator)?;
        let ip = match coord.ip() {
            ip if ip.is_unspecified() => IpAddr::V4(Ipv4Addr::LOCALHOST),
            ip => ip,
        };
        let listener = TcpListener::bind((ip, 0))
            .map_err(|e| Error::Bootstrap(format!("cannot bind data listener on {ip}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| Error::Bootstrap(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Bootstrap(e.to_string()))?;

        let deadline = Instant::now() + config.timeout;
        let addrs = if config.world_size == 1 {
            vec![local]
        } else if config.rank == 0 {
            coordinate(coord, local, config.world_size, deadline)?
        } else {
            register(coord, config.rank, local, config.world_size, deadline)?
        };

        let n = config.world_size as usize;
        let inner = Arc::new(Inner {
            rank: config.rank,
            size: config.world_size,
            addrs,
            timeout: config.timeout,
            max_payload: config.max_payload,
            mailbox: Mailbox::new(),
            stats: TransportStats::default(),
            closed: (0..n).map(|_| AtomicBool::new(false)).collect(),
            io: Mutex::new(Io {
                listener,
                out: (0..n).map(|_| None).collect(),
                incoming: Vec::new(),
                scratch: vec![0; READ_CHUNK],
            }),
        });

        let progress = config.progress_thread.then(|| {
            let stop = Arc::new(AtomicBool::new(false));
            let thread = {
                let stop = Arc::clone(&stop);
                let inner = Arc::clone(&inner);
                std::thread::spawn(move || {
                    let mut spins = 0;
                    while !stop.load(Ordering::Acquire) {
                        let events = inner.pump(&mut inner.lock_io(), 256);
                        if events.is_empty() {
                            spins += 1;
                            std::thread::sleep(backoff(spins).max(Duration::from_micros(50)));
                        } else {
                            spins = 0;
                        }
                    }
                })
            };
            (stop, thread)
        });

        Ok(TcpEndpoint { inner, progress })
    }

    /// Listen addresses of every rank, as distributed by the coordinator.
    pub fn addresses(&self) -> &[SocketAddr] {
        &self.inner.addrs
    }
}

/// Rank 0: collect one registration per other rank, then send everybody the
/// full table.
fn coordinate(coord: SocketAddr, local: SocketAddr, n: u32, deadline: Instant) -> Result<Vec<SocketAddr>> {
    let listener = TcpListener::bind(coord)
        .map_err(|e| Error::Bootstrap(format!("cannot bind coordinator at {coord}: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Bootstrap(e.to_string()))?;
    let mut table: Vec<Option<SocketAddr>> = vec![None; n as usize];
    table[0] = Some(local);
    let mut registered = Vec::new();
    while registered.len() + 1 < n as usize {
        let left = remaining(deadline).ok_or_else(|| {
            Error::Bootstrap(format!(
                "timed out waiting for registrations: {} of {} ranks arrived",
                registered.len() + 1,
                n
            ))
        })?;
        match listener.accept() {
            Ok((mut stream, _)) => {
                let setup = stream
                    .set_nonblocking(false)
                    .and_then(|_| stream.set_read_timeout(Some(left)));
                if setup.is_err() {
                    continue;
                }
                let (rank, addr) = bootstrap::read_line(&mut stream, MAX_LINE)
                    .and_then(|line| bootstrap::parse_reg(&line))?;
                let slot = table
                    .get_mut(rank as usize)
                    .filter(|_| rank != 0)
                    .ok_or_else(|| Error::Bootstrap(format!("registration from invalid rank {rank}")))?;
                if slot.replace(addr).is_some() {
                    return Err(Error::Bootstrap(format!("rank {rank} registered twice")));
                }
                registered.push(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(2)),
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Bootstrap(format!("coordinator accept failed: {e}"))),
        }
    }
    let table: Vec<SocketAddr> = table.into_iter().map(|a| a.expect("all registered")).collect();
    let line = bootstrap::format_table(&table);
    for mut stream in registered {
        stream
            .write_all(line.as_bytes())
            .map_err(|e| Error::Bootstrap(format!("cannot send address table: {e}")))?;
    }
    Ok(table)
}

/// Ranks other than 0: register with the coordinator, retrying until it is up
/// or the deadline passes, then wait for the table.
fn register(coord: SocketAddr, rank: u32, local: SocketAddr, n: u32, deadline: Instant) -> Result<Vec<SocketAddr>> {
    let mut stream = loop {
        let left = remaining(deadline)
            .ok_or_else(|| Error::Bootstrap(format!("coordinator {coord} unreachable before timeout")))?;
        match TcpStream::connect_timeout(&coord, left.min(Duration::from_secs(1))) {
            Ok(s) => break s,
            Err(_) => std::thread::sleep(Duration::from_millis(20).min(left)),
        }
    };
    stream
        .write_all(bootstrap::format_reg(rank, local).as_bytes())
        .map_err(|e| Error::Bootstrap(format!("registration failed: {e}")))?;
    let left = remaining(deadline).ok_or_else(|| Error::Bootstrap("timed out before address table".into()))?;
    stream
        .set_read_timeout(Some(left))
        .map_err(|e| Error::Bootstrap(e.to_string()))?;
    let table = bootstrap::parse_table(&bootstrap::read_line(&mut stream, MAX_LINE)?)?;
    if table.len() != n as usize || table[rank as usize] != local {
        return Err(Error::Bootstrap(format!(
            "address table of {} entries does not match a world of {n}",
            table.len()
        )));
    }
    Ok(table)
}

impl Inner {
    fn lock_io(&self) -> MutexGuard<'_, Io> {
        self.io.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn mark_closed(&self, rank: u32, events: &mut Vec<Event>) {
        if let Some(flag) = self.closed.get(rank as usize) {
            if !flag.swap(true, Ordering::AcqRel) {
                events.push(Event::Disconnected { rank });
                self.mailbox.notify();
            }
        }
    }

    /// Accepts new connections and reads whatever is available, up to
    /// `budget` socket reads.
    fn pump(&self, io: &mut Io, budget: usize) -> Vec<Event> {
        let mut events = Vec::new();
        loop {
            match io.listener.accept() {
                Ok((stream, _)) => {
                    if stream.set_nonblocking(true).is_ok() {
                        let _ = stream.set_nodelay(true);
                        io.incoming.push(Conn {
                            stream,
                            peer: None,
                            hello: Vec::new(),
                            decoder: FrameDecoder::new(self.max_payload),
                        });
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(_) => break,
            }
        }

        let mut reads = 0;
        let Io {
            incoming, scratch, ..
        } = io;
        incoming.retain_mut(|conn| {
            while reads < budget {
                reads += 1;
                match conn.stream.read(scratch) {
                    Ok(0) => {
                        if let Some(peer) = conn.peer {
                            self.mark_closed(peer, &mut events);
                        }
                        return false;
                    }
                    Ok(n) => {
                        if self.consume(conn, &scratch[..n], &mut events).is_err() {
                            if let Some(peer) = conn.peer {
                                self.mark_closed(peer, &mut events);
                            }
                            return false;
                        }
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(_) => {
                        if let Some(peer) = conn.peer {
                            self.mark_closed(peer, &mut events);
                        }
                        return false;
                    }
                }
            }
            true
        });

        // Outgoing connections carry nothing back, so readable means closed.
        // A peer is only declared gone here once nothing it sent can still be
        // waiting on an incoming connection.
        let quiet = |io: &Io, peer: u32| io.incoming.iter().all(|c| c.peer.is_some_and(|p| p != peer));
        for peer in 0..io.out.len() {
            let Some(stream) = io.out[peer].as_mut() else {
                continue;
            };
            let gone = match stream.read(&mut [0u8; 1]) {
                Ok(_) => true,
                Err(e) => !matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::Interrupted),
            };
            if gone {
                io.out[peer] = None;
                if quiet(io, peer as u32) {
                    self.mark_closed(peer as u32, &mut events);
                }
            }
        }
        events
    }

    fn consume(&self, conn: &mut Conn, mut bytes: &[u8], events: &mut Vec<Event>) -> Result<()> {
        if conn.peer.is_none() {
            let nl = bytes.iter().position(|&b| b == b'\n');
            let take = nl.map_or(bytes.len(), |i| i + 1);
            conn.hello.extend_from_slice(&bytes[..take]);
            bytes = &bytes[take..];
            if nl.is_none() {
                if conn.hello.len() > HELLO_LIMIT {
                    return Err(Error::invalid("oversized connection greeting"));
                }
                return Ok(());
            }
            let line = std::str::from_utf8(&conn.hello).map_err(|_| Error::invalid("greeting is not UTF-8"))?;
            let peer = bootstrap::parse_hello(line)?;
            if peer >= self.size || peer == self.rank {
                return Err(Error::invalid(format!("greeting from invalid rank {peer}")));
            }
            conn.peer = Some(peer);
        }
        conn.decoder.push(bytes);
        let peer = conn.peer.expect("greeting parsed");
        while let Some(msg) = conn.decoder.next_frame()? {
            if msg.envelope.source != peer || msg.envelope.dest != self.rank {
                return Err(Error::invalid("frame addressed inconsistently with its connection"));
            }
            events.push(self.mailbox.arrive(msg));
        }
        Ok(())
    }

    fn open(&self, io: &mut Io, dest: u32) -> Result<TcpStream> {
        if let Some(stream) = io.out[dest as usize].take() {
            return Ok(stream);
        }
        let gone = || Error::Disconnected { rank: dest };
        let mut stream = TcpStream::connect_timeout(&self.addrs[dest as usize], self.timeout).map_err(|_| gone())?;
        stream.set_nodelay(true).map_err(|_| gone())?;
        stream
            .write_all(bootstrap::format_hello(self.rank).as_bytes())
            .map_err(|_| gone())?;
        stream.set_nonblocking(true).map_err(|_| gone())?;
        Ok(stream)
    }

    /// Writes a whole frame. While the socket is full, incoming data keeps
    /// being read so two ranks sending large messages to each other cannot
    /// stall.
    fn write_frame(&self, io: &mut Io, dest: u32, parts: [&[u8]; 2], deadline: Option<Instant>) -> Result<()> {
        let mut stream = self.open(io, dest)?;
        let mut spins = 0;
        for mut part in parts {
            while !part.is_empty() {
                match stream.write(part) {
                    Ok(0) => return Err(self.lost(dest)),
                    Ok(n) => {
                        part = &part[n..];
                        spins = 0;
                    }
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) if e.kind() == ErrorKind::WouldBlock => {
                        if deadline.is_some_and(|d| Instant::now() >= d) {
                            return Err(self.lost(dest));
                        }
                        if self.pump(io, 16).is_empty() {
                            spins += 1;
                            std::thread::sleep(backoff(spins));
                        }
                    }
                    Err(_) => return Err(self.lost(dest)),
                }
            }
        }
        io.out[dest as usize] = Some(stream);
        Ok(())
    }

    fn lost(&self, dest: u32) -> Error {
        let mut events = Vec::new();
        self.mark_closed(dest, &mut events);
        Error::Disconnected { rank: dest }
    }

    fn send(&self, dest: u32, envelope: &Envelope, payload: &[u8], deadline: Option<Instant>) -> Result<()> {
        if dest >= self.size {
            return Err(Error::invalid(format!("no rank {dest} in world of {}", self.size)));
        }
        if payload.len() as u64 > self.max_payload {
            return Err(Error::invalid(format!(
                "payload of {} bytes exceeds cap of {}",
                payload.len(),
                self.max_payload
            )));
        }
        self.stats.count_frame();
        if dest == self.rank {
            self.mailbox.arrive(Message::new(*envelope, payload.to_vec()));
            return Ok(());
        }
        if self.closed[dest as usize].load(Ordering::Acquire) {
            return Err(Error::Disconnected { rank: dest });
        }
        let mut envelope = *envelope;
        envelope.payload_len = payload.len() as u64;
        let header = encode_header(&envelope);
        let mut io = self.lock_io();
        self.write_frame(&mut io, dest, [&header, payload], deadline)
    }
}

impl Endpoint for TcpEndpoint {
    fn rank(&self) -> u32 {
        self.inner.rank
    }

    fn world_size(&self) -> u32 {
        self.inner.size
    }

    fn mailbox(&self) -> &Mailbox {
        &self.inner.mailbox
    }

    fn stats(&self) -> &TransportStats {
        &self.inner.stats
    }

    fn send_frame(&self, dest: u32, envelope: &Envelope, payload: &[u8]) -> Result<()> {
        self.inner.send(dest, envelope, payload, None)
    }

    fn progress(&self, budget: usize) -> Vec<Event> {
        let mut io = self.inner.lock_io();
        self.inner.pump(&mut io, budget)
    }

    fn peer_closed(&self, rank: u32) -> bool {
        self.inner
            .closed
            .get(rank as usize)
            .is_some_and(|c| c.load(Ordering::Acquire))
    }

    fn broadcast_abort(&self, code: i32) {
        let deadline = Instant::now() + self.inner.timeout.min(Duration::from_secs(2));
        for r in 0..self.inner.size {
            if r != self.inner.rank {
                let msg = Message::abort(self.inner.rank, r, code);
                let _ = self.inner.send(r, &msg.envelope, &msg.payload, Some(deadline));
            }
        }
    }

    fn idle(&self, generation: u64, spins: u32) {
        if self.progress.is_some() {
            self.inner
                .mailbox
                .wait_changed(generation, backoff(spins).max(Duration::from_micros(200)));
        } else if spins < 16 {
            std::thread::yield_now();
        } else {
            std::thread::sleep(backoff(spins));
        }
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        if let Some((stop, thread)) = self.progress.take() {
            stop.store(true, Ordering::Release);
            let _ = thread.join();
        }
        let mut io = self.inner.lock_io();
        for stream in io.out.iter_mut().filter_map(Option::take) {
            let _ = stream.shutdown(std::net::Shutdown::Write);
        }
    }
}
