//! Conformance suite: invariant checks run collectively with a fixed seed.
//!
//! Every rank derives the same random inputs from the seed, so each rank can
//! compute every oracle locally. A check passes when it passes on all ranks.
//! Rank 0 reports one line per check; the lines carry no timings or addresses,
//! so the same seed and rank count give the same transcript on any transport.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smpi::datatype::{DatatypeTree, FundamentalKind};
use smpi::serialize::to_bytes;
use smpi::{
    irregular, single, AssertLevel, Communicator, Error, LogicalAnd, Max, Min, Prod, RequestState, Sum, ANY_SOURCE,
};

use crate::examples::Output;

type Check = fn(&mut Communicator<'_>, &mut ChaCha8Rng) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("datatype-oracle", datatype_oracle),
    ("pack-roundtrip", pack_roundtrip),
    ("signature-agreement", signature_agreement),
    ("non-overtaking", non_overtaking),
    ("wildcard-order", wildcard_order),
    ("broadcast-oracle", broadcast_oracle),
    ("reduce-oracle", reduce_oracle),
    ("allreduce-oracle", allreduce_oracle),
    ("alltoallv-oracle", alltoallv_oracle),
    ("truncation", truncation),
    ("type-mismatch", type_mismatch),
    ("request-equivalence", request_equivalence),
    ("serialization", serialization),
    ("probe", probe),
    ("context-isolation", context_isolation),
];

/// Names of the checks, in execution order.
pub fn check_names() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|(name, _)| *name)
}

pub fn run(comm: &mut Communicator<'_>, seed: u64) -> Output {
    let level = comm.session().assert_level();
    let mut lines = vec![format!(
        "conformance seed {seed}, {} ranks, assert level {}",
        comm.size(),
        level.as_u8()
    )];
    let mut failed = 0;
    for (i, (name, check)) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let local = check(comm, &mut rng);
        let all = match comm.allreduce(single(local.is_ok()), LogicalAnd) {
            Ok(all) => all,
            Err(e) => {
                return Output::failed(lines, format!("{name}: job broke down: {e}"));
            }
        };
        let line = match (&local, all) {
            (Ok(detail), true) => format!("pass {name}: {detail}"),
            (Ok(_), false) => format!("FAIL {name}: failed on another rank"),
            (Err(why), _) => format!("FAIL {name}: {why}"),
        };
        if !all {
            failed += 1;
            if local.is_err() {
                eprintln!("rank {}: {line}", comm.rank());
            }
        }
        lines.push(line);
    }
    lines.push(format!("{} of {} checks passed", CHECKS.len() - failed, CHECKS.len()));
    if comm.rank() != 0 {
        lines.clear();
    }
    if failed > 0 {
        Output::failed(lines, format!("{failed} conformance checks failed"))
    } else {
        Output::ok(lines)
    }
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

/// Rank-specific generator derived from the check's shared one.
fn rank_rng(shared: &ChaCha8Rng, rank: u32, trial: u64) -> ChaCha8Rng {
    let mut r = shared.clone();
    r.set_stream(r.get_stream() ^ (u64::from(rank) + 1) << 32 ^ trial << 48);
    r
}

fn neighbours(comm: &Communicator<'_>) -> (u32, u32) {
    let (me, n) = (comm.rank(), comm.size());
    ((me + 1) % n, (me + n - 1) % n)
}

const KINDS: [FundamentalKind; 12] = FundamentalKind::ALL;

fn random_tree(rng: &mut ChaCha8Rng, depth: u32) -> DatatypeTree {
    if depth == 0 || rng.gen_bool(0.3) {
        return DatatypeTree::fundamental(*KINDS.choose(rng).expect("non-empty"));
    }
    match rng.gen_range(0..3) {
        0 => DatatypeTree::contiguous(rng.gen_range(1..=8), random_tree(rng, depth - 1)).expect("count >= 1"),
        1 => {
            let bl = rng.gen_range(1..=4);
            let stride = bl + rng.gen_range(0..=3);
            DatatypeTree::vector(rng.gen_range(1..=8), bl, stride as i64, random_tree(rng, depth - 1))
                .expect("stride >= blocklength")
        }
        _ => {
            let mut fields = Vec::new();
            let mut at = 0;
            for _ in 0..rng.gen_range(1..=4) {
                at += rng.gen_range(0..4);
                let t = random_tree(rng, depth - 1);
                let e = t.extent().expect("valid");
                fields.push((at, t));
                at += e;
            }
            fields.shuffle(rng);
            DatatypeTree::struct_type(fields, at + rng.gen_range(0..4)).expect("disjoint fields")
        }
    }
}

/// A random tree whose element spans at most `cap` bytes.
fn bounded_tree(rng: &mut ChaCha8Rng, cap: usize) -> DatatypeTree {
    loop {
        let t = random_tree(rng, 3);
        if t.extent().is_ok_and(|e| e <= cap) {
            return t;
        }
    }
}

/// Kind occupying each byte of one element.
fn byte_labels(t: &DatatypeTree) -> Vec<Option<FundamentalKind>> {
    fn walk(t: &DatatypeTree, base: usize, out: &mut [Option<FundamentalKind>]) {
        match t {
            DatatypeTree::Fundamental(k) => out[base..base + k.size()].fill(Some(*k)),
            DatatypeTree::Contiguous { count, inner } => {
                let e = inner.extent().expect("valid");
                (0..*count).for_each(|i| walk(inner, base + i * e, out));
            }
            DatatypeTree::Vector { count, blocklength, stride, inner } => {
                let e = inner.extent().expect("valid");
                for b in 0..*count {
                    for j in 0..*blocklength {
                        walk(inner, base + (b * *stride as usize + j) * e, out);
                    }
                }
            }
            DatatypeTree::Struct { fields, .. } => fields.iter().for_each(|(off, f)| walk(f, base + off, out)),
        }
    }
    let mut out = vec![None; t.extent().expect("valid")];
    walk(t, 0, &mut out);
    out
}

fn datatype_oracle(_: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    const TREES: usize = 200;
    let mut segments = 0;
    for i in 0..TREES {
        let t = bounded_tree(rng, 1 << 14);
        let labels = byte_labels(&t);
        let mut expected: Vec<(usize, usize)> = Vec::new();
        let mut prev: Option<(usize, FundamentalKind)> = None;
        for (at, l) in labels.iter().enumerate() {
            match (*l, prev) {
                (Some(k), Some((end, pk))) if pk == k && end == at => expected.last_mut().expect("open run").1 += 1,
                (Some(_), _) => expected.push((at, 1)),
                (None, _) => {}
            }
            if let Some(k) = l {
                prev = Some((at + 1, *k));
            }
        }
        let c = t.commit().map_err(err)?;
        ensure(c.extent() == labels.len(), || format!("tree {i}: extent {} vs {}", c.extent(), labels.len()))?;
        let size = labels.iter().flatten().count();
        ensure(c.size() == size, || format!("tree {i}: size {} vs {size}", c.size()))?;
        ensure(c.spans() == expected, || format!("tree {i}: segments differ"))?;
        segments += expected.len();
    }
    Ok(format!("{TREES} trees, {segments} segments"))
}

fn pack_roundtrip(_: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    const PAIRS: usize = 200;
    let mut bytes = 0;
    for i in 0..PAIRS {
        let t = bounded_tree(rng, 1 << 12);
        let labels = byte_labels(&t);
        let count = rng.gen_range(0..4);
        let c = t.commit().map_err(err)?;
        let mut source = vec![0u8; c.extent() * count];
        rng.fill(&mut source[..]);
        let packed = c.pack(&source, count).map_err(err)?;
        let mut dest = vec![0u8; source.len()];
        c.unpack(&packed, count, &mut dest).map_err(err)?;
        let covered = |at: usize| labels[at % labels.len()].is_some();
        ensure((0..source.len()).all(|at| !covered(at) || dest[at] == source[at]), || format!("pair {i}: bytes differ"))?;
        ensure((0..source.len()).all(|at| covered(at) || dest[at] == 0), || format!("pair {i}: gap written"))?;
        bytes += packed.len();
    }
    Ok(format!("{PAIRS} pairs, {bytes} packed bytes"))
}

fn signature_agreement(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let t = bounded_tree(rng, 1 << 14);
    let sig = t.clone().commit().map_err(err)?.signature();
    let lo = comm.allreduce(single(sig), Min).map_err(err)?;
    let hi = comm.allreduce(single(sig), Max).map_err(err)?;
    ensure(lo == hi && lo == sig, || "ranks derived different signatures".into())?;
    let other = DatatypeTree::contiguous(2, t).map_err(err)?.commit().map_err(err)?.signature();
    ensure(other != sig, || "nested type collided with its inner type".into())?;
    Ok(format!("{sig:#018x}"))
}

fn non_overtaking(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    const MSGS: u32 = 200;
    let (next, prev) = neighbours(comm);
    let mut mine = rank_rng(rng, comm.rank(), 0);
    for k in 0..MSGS {
        if mine.gen_bool(0.2) {
            std::thread::yield_now();
        }
        comm.send(vec![comm.rank(), k], next, 11).map_err(err)?;
    }
    for k in 0..MSGS {
        let (v, _) = comm.recv(vec![0u32; 2], prev, 11).map_err(err)?;
        ensure(v == [prev, k], || format!("message {k} arrived as {v:?}"))?;
    }
    Ok(format!("{MSGS} messages in order"))
}

fn wildcard_order(comm: &mut Communicator<'_>, _: &mut ChaCha8Rng) -> Result<String, String> {
    const PER_RANK: u32 = 20;
    for k in 0..PER_RANK {
        comm.send(single(k), 0, 12).map_err(err)?;
    }
    if comm.rank() != 0 {
        return Ok(format!("{} messages", PER_RANK * comm.size()));
    }
    let mut next = vec![0u32; comm.size() as usize];
    for _ in 0..PER_RANK * comm.size() {
        let (k, st) = comm.recv(single(0u32), ANY_SOURCE, 12).map_err(err)?;
        let slot = &mut next[st.source as usize];
        ensure(k == *slot, || format!("from {}: got {k}, expected {slot}", st.source))?;
        *slot += 1;
    }
    Ok(format!("{} messages", PER_RANK * comm.size()))
}

const TRIALS: u64 = 20;

fn ints(shared: &ChaCha8Rng, rank: u32, trial: u64, len: usize) -> Vec<i64> {
    let mut r = rank_rng(shared, rank, trial);
    (0..len).map(|_| r.gen()).collect()
}

fn floats(shared: &ChaCha8Rng, rank: u32, trial: u64, len: usize) -> Vec<f64> {
    let mut r = rank_rng(shared, rank, trial);
    (0..len).map(|_| r.gen_range(-1e3..1e3)).collect()
}

fn fold<T: Copy>(n: u32, input: impl Fn(u32) -> Vec<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    (1..n).fold(input(0), |acc, r| acc.into_iter().zip(input(r)).map(|(a, b)| f(a, b)).collect())
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|f| f.to_bits()).collect()
}

fn broadcast_oracle(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let n = comm.size();
    for trial in 0..TRIALS {
        let root = (trial % u64::from(n)) as u32;
        let len = (trial % 9) as usize;
        let want = ints(rng, root, trial, len);
        let mine = if comm.rank() == root { want.clone() } else { vec![0; len] };
        let got = comm.broadcast(mine, root).map_err(err)?;
        ensure(got == want, || format!("trial {trial} from root {root}"))?;
    }
    Ok(format!("{TRIALS} trials"))
}

fn reduce_oracle(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (me, n) = (comm.rank(), comm.size());
    for trial in 0..TRIALS {
        let root = ((trial * 3) % u64::from(n)) as u32;
        let len = (trial % 7) as usize;
        let sum = comm.reduce(ints(rng, me, trial, len), Sum, root).map_err(err)?;
        let prod = comm.reduce(floats(rng, me, trial, len), Prod, root).map_err(err)?;
        if me == root {
            ensure(sum == fold(n, |r| ints(rng, r, trial, len), i64::wrapping_add), || format!("sum, trial {trial}"))?;
            let want = fold(n, |r| floats(rng, r, trial, len), |a, b| a * b);
            ensure(bits(&prod) == bits(&want), || format!("product, trial {trial}"))?;
        }
    }
    Ok(format!("{TRIALS} trials"))
}

fn allreduce_oracle(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (me, n) = (comm.rank(), comm.size());
    for trial in 0..TRIALS {
        let len = (trial % 5) as usize;
        let sum = comm.allreduce(floats(rng, me, trial, len), Sum).map_err(err)?;
        let want = fold(n, |r| floats(rng, r, trial, len), |a, b| a + b);
        ensure(bits(&sum) == bits(&want), || format!("float sum, trial {trial}"))?;
        let min = comm.allreduce(ints(rng, me, trial, len), Min).map_err(err)?;
        ensure(min == fold(n, |r| ints(rng, r, trial, len), i64::min), || format!("min, trial {trial}"))?;
    }
    Ok(format!("{TRIALS} trials"))
}

fn alltoallv_oracle(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (me, n) = (comm.rank() as usize, comm.size() as usize);
    let item = |trial: u64, s: usize, d: usize, k: usize| (trial * 1_000_000 + (s * 10_000 + d * 100 + k) as u64) as i64;
    for trial in 0..TRIALS {
        let mut shared = rank_rng(rng, u32::MAX, trial);
        let counts: Vec<Vec<usize>> = (0..n).map(|_| (0..n).map(|_| shared.gen_range(0..4)).collect()).collect();
        let mut send = Vec::new();
        let mut sdispl = Vec::new();
        for (d, &c) in counts[me].iter().enumerate() {
            sdispl.push(send.len());
            send.extend((0..c).map(|k| item(trial, me, d, k)));
        }
        let rcounts: Vec<usize> = (0..n).map(|s| counts[s][me]).collect();
        let rdispl: Vec<usize> = rcounts.iter().scan(0, |at, c| Some(std::mem::replace(at, *at + c))).collect();
        let total = rcounts.iter().sum();
        let send = irregular(send, counts[me].clone(), sdispl).map_err(err)?;
        let recv = irregular(vec![0i64; total], rcounts.clone(), rdispl).map_err(err)?;
        let (_, got) = comm.alltoallv(send, recv).map_err(err)?;
        let want: Vec<i64> = (0..n).flat_map(|s| (0..rcounts[s]).map(move |k| item(trial, s, me, k))).collect();
        ensure(got == want, || format!("trial {trial}"))?;
    }
    Ok(format!("{TRIALS} trials"))
}

fn truncation(comm: &mut Communicator<'_>, _: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    comm.send(vec![1i32; 6], next, 13).map_err(err)?;
    match comm.recv(vec![0i32; 4], prev, 13) {
        Err(Error::Truncation { actual_bytes }) if actual_bytes == 24 => Ok(format!("{actual_bytes} bytes reported")),
        other => Err(format!("expected truncation, got {:?}", other.map(|(v, _)| v))),
    }
}

fn type_mismatch(comm: &mut Communicator<'_>, _: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    let level = comm.session().assert_level();
    comm.send(single(1.5f64), next, 14).map_err(err)?;
    let got = comm.recv(single(0u64), prev, 14);
    if level.enables(AssertLevel::Metadata) {
        match got {
            Err(Error::TypeMismatch { .. }) => Ok("mismatch detected".into()),
            other => Err(format!("expected a type mismatch, got {other:?}")),
        }
    } else {
        match got {
            Ok((bits, _)) if bits == 1.5f64.to_bits() => Ok("bytes delivered unchecked".into()),
            other => Err(format!("expected raw delivery, got {other:?}")),
        }
    }
}

fn request_equivalence(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    let sizes = [0usize, 1, 4096, 1 << 20];
    for (i, &len) in sizes.iter().enumerate() {
        let data = |rank: u32| -> Vec<u8> {
            let mut v = vec![0u8; len];
            rank_rng(rng, rank, i as u64).fill(&mut v[..]);
            v
        };
        let tag = 20 + i as i32;
        // Completed by polling.
        let buf = vec![0u8; len];
        let ptr = buf.as_ptr();
        let mut req = comm.irecv(buf, prev, tag).map_err(err)?;
        let sent = comm.isend(data(comm.rank()), next, tag).map_err(err)?;
        let _ = sent.wait().map_err(|f| err(f.error))?;
        let polled = loop {
            if let Some((v, _)) = req.test().map_err(|f| err(f.error))? {
                break v;
            }
            std::thread::yield_now();
        };
        ensure(req.state() == RequestState::Consumed, || "request not consumed".into())?;
        ensure(polled.as_ptr() == ptr, || format!("{len} bytes: test returned a different allocation"))?;
        // Completed by waiting.
        let buf = vec![0u8; len];
        let ptr = buf.as_ptr();
        let req = comm.irecv(buf, prev, tag).map_err(err)?;
        comm.send(data(comm.rank()), next, tag).map_err(err)?;
        let (waited, _) = req.wait().map_err(|f| err(f.error))?;
        ensure(waited.as_ptr() == ptr, || format!("{len} bytes: wait returned a different allocation"))?;
        ensure(polled == waited && waited == data(prev), || format!("{len} bytes: results differ"))?;
    }
    Ok(format!("sizes {sizes:?}"))
}

type Nested = Vec<(String, Vec<(i32, bool)>)>;

fn nested(shared: &ChaCha8Rng, rank: u32) -> Nested {
    let mut r = rank_rng(shared, rank, 0);
    (0..r.gen_range(0..6))
        .map(|i| {
            let s: String = (0..r.gen_range(0..10)).map(|_| r.gen_range('a'..='z')).collect();
            (format!("{s}-{i}-\u{00e9}"), (0..r.gen_range(0..5)).map(|_| (r.gen(), r.gen())).collect())
        })
        .collect()
}

fn serialization(comm: &mut Communicator<'_>, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    comm.send_serialized(&nested(rng, comm.rank()), next, 15).map_err(err)?;
    let (got, st): (Nested, _) = comm.recv_serialized(prev, 15).map_err(err)?;
    let want = nested(rng, prev);
    ensure(got == want, || "decoded value differs".into())?;
    ensure(st.count == to_bytes(&want).len(), || "status count is not the encoded size".into())?;
    let total = comm.allreduce(single(st.count as u64), Sum).map_err(err)?;
    Ok(format!("{total} bytes exchanged"))
}

fn probe(comm: &mut Communicator<'_>, _: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    let len = comm.rank() as usize + 3;
    comm.send(vec![7u16; len], next, 16).map_err(err)?;
    let st = comm.probe(ANY_SOURCE, 16).map_err(err)?;
    let expect_len = prev as usize + 3;
    ensure(st.source == prev && st.bytes == expect_len as u64 * 2, || format!("probe saw {st:?}"))?;
    let (v, _) = comm.recv_probe::<u16>(prev, 16).map_err(err)?;
    ensure(v == vec![7; expect_len], || "received payload differs".into())?;
    Ok("probe sized the receive".into())
}

fn context_isolation(comm: &mut Communicator<'_>, _: &mut ChaCha8Rng) -> Result<String, String> {
    let (next, prev) = neighbours(comm);
    let mut dup = comm.duplicate().map_err(err)?;
    ensure(dup.context_id() != comm.context_id(), || "duplicate shares the context".into())?;
    dup.send(single(1u8), next, 17).map_err(err)?;
    comm.send(single(2u8), next, 17).map_err(err)?;
    let (a, _) = comm.recv(single(0u8), prev, 17).map_err(err)?;
    let (b, _) = dup.recv(single(0u8), prev, 17).map_err(err)?;
    ensure((a, b) == (2, 1), || format!("got {a} on the parent and {b} on the duplicate"))?;
    Ok("messages stayed in their context".into())
}
