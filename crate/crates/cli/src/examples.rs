//! Example programs. Each runs collectively on every rank and returns the
//! lines this rank contributes to the job transcript.

use bytemuck::{Pod, Zeroable};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smpi::datatype::DatatypeTree;
use smpi::{buffer_adapter, irregular, single, Communicator, Error, LogicalAnd, Max, Session, Sum};

use crate::conformance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    Pingpong,
    Ring,
    Bcast,
    Reduce,
    Allreduce,
    Alltoallv,
    Serialize,
    Typepool,
    Conformance,
    /// The last rank calls abort with the configured code.
    Abort,
    /// Broadcast with a count that differs on one rank.
    BcastMismatch,
}

impl Example {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

type Lines = Result<Vec<String>, String>;

/// What one rank contributes: transcript lines, and why it failed if it did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub lines: Vec<String>,
    pub failure: Option<String>,
}

impl Output {
    pub fn ok(lines: Vec<String>) -> Self {
        Output { lines, failure: None }
    }

    pub fn failed(lines: Vec<String>, why: impl Into<String>) -> Self {
        Output {
            lines,
            failure: Some(why.into()),
        }
    }
}

impl From<Lines> for Output {
    fn from(r: Lines) -> Self {
        match r {
            Ok(lines) => Output::ok(lines),
            Err(why) => Output::failed(Vec::new(), why),
        }
    }
}

fn fail(e: Error) -> String {
    e.to_string()
}

fn expect(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

/// Runs `example` on this rank.
pub fn run(example: Example, session: &Session, seed: u64) -> Output {
    let mut comm = match session.world() {
        Ok(c) => c,
        Err(e) => return Output::failed(Vec::new(), fail(e)),
    };
    if example == Example::Conformance {
        return conformance::run(&mut comm, seed);
    }
    run_simple(example, session, &mut comm, seed).into()
}

fn run_simple(example: Example, session: &Session, comm: &mut Communicator<'_>, seed: u64) -> Lines {
    match example {
        Example::Pingpong => pingpong(comm, seed),
        Example::Ring => ring(comm),
        Example::Bcast => bcast(comm, seed),
        Example::Reduce => reduce(comm, seed),
        Example::Allreduce => allreduce(comm, seed),
        Example::Alltoallv => alltoallv(comm),
        Example::Serialize => serialize(comm, seed),
        Example::Typepool => typepool(session, comm),
        Example::Conformance => unreachable!("handled by run"),
        Example::Abort => {
            if comm.rank() == comm.size() - 1 {
                comm.abort(session.abort_code());
            }
            // Everyone else blocks until the abort arrives.
            comm.recv(single(0u8), comm.size() - 1, 0).map_err(fail)?;
            Err("abort did not arrive".into())
        }
        Example::BcastMismatch => {
            let len = if comm.rank() == comm.size() - 1 { 3 } else { 4 };
            comm.broadcast(vec![7i32; len], 0).map_err(fail)?;
            Err("mismatched broadcast completed".into())
        }
    }
}

fn values(seed: u64, rank: u32, len: usize) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(rank) << 40);
    (0..len).map(|_| rng.gen_range(-1000..1000)).collect()
}

fn pingpong(comm: &mut Communicator<'_>, seed: u64) -> Lines {
    const ROUNDS: usize = 16;
    let me = comm.rank();
    let peer = if me % 2 == 0 { (me + 1).min(comm.size() - 1) } else { me - 1 };
    let mut payload = values(seed, 0, 64);
    let original = payload.clone();
    for _ in 0..ROUNDS {
        if me % 2 == 0 {
            payload = comm.send(payload, peer, 1).map_err(fail)?;
            payload = comm.recv(payload, peer, 1).map_err(fail)?.0;
        } else {
            payload = comm.recv(payload, peer, 1).map_err(fail)?.0;
            payload = comm.send(payload, peer, 1).map_err(fail)?;
        }
    }
    expect(payload == original, || "payload changed in flight".into())?;
    Ok(vec![format!("pingpong with {peer}: {ROUNDS} rounds of {} bytes", payload.len() * 8)])
}

fn ring(comm: &mut Communicator<'_>) -> Lines {
    let (me, n) = (comm.rank(), comm.size());
    let token = if me == 0 {
        comm.send(single(0u64), 1 % n, 0).map_err(fail)?;
        comm.recv(single(0u64), n - 1, 0).map_err(fail)?.0
    } else {
        let (t, _) = comm.recv(single(0u64), me - 1, 0).map_err(fail)?;
        comm.send(single(t + u64::from(me)), (me + 1) % n, 0).map_err(fail)?;
        t
    };
    if me == 0 {
        let expected = u64::from(n) * u64::from(n - 1) / 2;
        expect(token == expected, || format!("ring token {token}, expected {expected}"))?;
        return Ok(vec![format!("ring of {n}: token {token}")]);
    }
    Ok(Vec::new())
}

fn bcast(comm: &mut Communicator<'_>, seed: u64) -> Lines {
    let data = if comm.rank() == 0 { values(seed, 0, 32) } else { vec![0; 32] };
    let got = comm.broadcast(data, 0).map_err(fail)?;
    expect(got == values(seed, 0, 32), || "broadcast value differs from root".into())?;
    Ok(vec![format!("bcast checksum {}", got.iter().sum::<i64>())])
}

fn reduce(comm: &mut Communicator<'_>, seed: u64) -> Lines {
    let n = comm.size();
    let got = comm.reduce(values(seed, comm.rank(), 8), Sum, 0).map_err(fail)?;
    if comm.rank() != 0 {
        return Ok(Vec::new());
    }
    let oracle = (0..n).fold(vec![0i64; 8], |acc, r| acc.iter().zip(values(seed, r, 8)).map(|(a, b)| a + b).collect());
    expect(got == oracle, || format!("reduce gave {got:?}, expected {oracle:?}"))?;
    Ok(vec![format!("reduce sum {got:?}")])
}

fn allreduce(comm: &mut Communicator<'_>, seed: u64) -> Lines {
    let me = comm.rank();
    let max = comm.allreduce(values(seed, me, 4), Max).map_err(fail)?;
    let all_even = comm.allreduce(single(me % 2 == 0), LogicalAnd).map_err(fail)?;
    Ok(vec![format!("allreduce max {max:?}, all even {all_even}")])
}

fn alltoallv(comm: &mut Communicator<'_>) -> Lines {
    // Rank r sends d+1 copies of r*100+d to rank d.
    let (me, n) = (comm.rank() as usize, comm.size() as usize);
    let send_counts: Vec<usize> = (0..n).map(|d| d + 1).collect();
    let send_displs: Vec<usize> = send_counts.iter().scan(0, |at, c| Some(std::mem::replace(at, *at + c))).collect();
    let send: Vec<u32> = (0..n).flat_map(|d| std::iter::repeat_n((me * 100 + d) as u32, d + 1)).collect();
    let recv_counts = vec![me + 1; n];
    let recv_displs: Vec<usize> = (0..n).map(|s| s * (me + 1)).collect();
    let send = irregular(send, send_counts, send_displs).map_err(fail)?;
    let recv = irregular(vec![0u32; n * (me + 1)], recv_counts, recv_displs).map_err(fail)?;
    let (_, got) = comm.alltoallv(send, recv).map_err(fail)?;
    let expected: Vec<u32> = (0..n).flat_map(|s| std::iter::repeat_n((s * 100 + me) as u32, me + 1)).collect();
    expect(got == expected, || format!("alltoallv received {got:?}"))?;
    Ok(vec![format!("alltoallv received {} elements", got.len())])
}

fn serialize(comm: &mut Communicator<'_>, seed: u64) -> Lines {
    let value: Vec<(String, Vec<i64>)> = (0..4u32).map(|i| (format!("item-{i}"), values(seed, i, i as usize))).collect();
    if comm.rank() == 0 {
        for dest in 1..comm.size() {
            comm.send_serialized(&value, dest, 2).map_err(fail)?;
        }
        return Ok(vec![format!("serialize sent {} bytes to {} ranks", smpi::serialize::to_bytes(&value).len(), comm.size() - 1)]);
    }
    let (got, status): (Vec<(String, Vec<i64>)>, _) = comm.recv_serialized(0, 2).map_err(fail)?;
    expect(got == value, || "deserialized value differs".into())?;
    Ok(vec![format!("serialize received {} bytes", status.count)])
}

/// Host record used by the typepool example. The trailing padding is spelled
/// out so the type is plain old data.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Pod, Zeroable)]
pub struct MyType {
    pub a: i32,
    pub b: [i32; 3],
    pub c: f64,
    pub d: i8,
    pub pad: [u8; 7],
}

pub const MY_TYPE_ID: u64 = 1;

fn typepool(session: &Session, comm: &mut Communicator<'_>) -> Lines {
    let desc = smpi::layout_of!(MyType { a, b, c, d });
    let tree = DatatypeTree::for_layout(&desc).map_err(fail)?;
    let pool = session.type_pool();
    pool.register(MY_TYPE_ID, tree.commit().map_err(fail)?).map_err(fail)?;
    let dt = pool.lookup(MY_TYPE_ID).map_err(fail)?;

    let (me, n) = (comm.rank(), comm.size());
    let record = |r: u32| MyType {
        a: r as i32,
        b: [1, 2, 3],
        c: f64::from(r) * 0.5,
        d: -(r as i8),
        pad: [0; 7],
    };
    comm.send(buffer_adapter(vec![record(me); 2], &dt).map_err(fail)?, (me + 1) % n, 3)
        .map_err(fail)?;
    // Padding bytes stay as they were on the receiving side.
    let mut recv = vec![MyType { pad: [0xEE; 7], ..MyType::zeroed() }; 2];
    let (_, status) = comm.recv(buffer_adapter(&mut recv, &dt).map_err(fail)?, (me + n - 1) % n, 3).map_err(fail)?;
    let want = MyType { pad: [0xEE; 7], ..record((me + n - 1) % n) };
    expect(recv == [want; 2], || format!("typed receive gave {recv:?}"))?;
    Ok(vec![format!(
        "typepool size {} extent {} segments {:?}, received {} elements",
        dt.size(),
        dt.extent(),
        dt.spans(),
        status.count
    )])
}
