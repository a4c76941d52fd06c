//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Every expected value is computed here, independently of the library: byte
//! layouts by labelling each byte of an element, signatures with the `fnv`
//! crate, collective results by folding inputs on one thread, and wire bytes
//! from a hand-written file.

use std::collections::{HashMap, HashSet};
use std::hash::Hasher;
use std::mem::size_of;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smpi::datatype::{DatatypeTree, FundamentalKind};
use smpi::serialize::{from_bytes, to_bytes};
use smpi::transport::frame::{decode_header, encode_frame};
use smpi::transport::{Envelope, FrameKind, DEFAULT_MAX_PAYLOAD};
use smpi::{
    abort_code_of, irregular, single, AssertLevel, Error, InProcWorld, Max, Min, Prod, RequestState,
    Session, SessionConfig, Sum,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("datatype layout matches byte oracle", layout_oracle),
        ("struct with gaps: size 25, extent 32", struct_with_gaps),
        ("pack/unpack roundtrip", pack_roundtrip),
        ("signatures collide never, agree always", signatures),
        ("collectives match single-threaded oracle", collectives),
        ("same-tag messages never overtake", non_overtaking),
        ("test loop equals wait, buffers returned", request_equivalence),
        ("error injection", error_injection),
        ("inproc and tcp transcripts identical", backend_equivalence),
        ("wire header golden bytes", golden_bytes),
        ("serialization roundtrip and corrupt input", serialization),
        ("misuse rejected at compile time", compile_fail),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({detail}; {took:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Datatypes

const KINDS: [FundamentalKind; 12] = [
    FundamentalKind::Int8,
    FundamentalKind::Uint8,
    FundamentalKind::Int16,
    FundamentalKind::Uint16,
    FundamentalKind::Int32,
    FundamentalKind::Uint32,
    FundamentalKind::Int64,
    FundamentalKind::Uint64,
    FundamentalKind::Float32,
    FundamentalKind::Float64,
    FundamentalKind::Bool,
    FundamentalKind::Byte,
];

fn host_size(k: FundamentalKind) -> usize {
    use FundamentalKind::*;
    match k {
        Int8 => size_of::<i8>(),
        Uint8 => size_of::<u8>(),
        Int16 => size_of::<i16>(),
        Uint16 => size_of::<u16>(),
        Int32 => size_of::<i32>(),
        Uint32 => size_of::<u32>(),
        Int64 => size_of::<i64>(),
        Uint64 => size_of::<u64>(),
        Float32 => size_of::<f32>(),
        Float64 => size_of::<f64>(),
        Bool => size_of::<bool>(),
        Byte => size_of::<u8>(),
    }
}

fn oracle_extent(t: &DatatypeTree) -> usize {
    match t {
        DatatypeTree::Fundamental(k) => host_size(*k),
        DatatypeTree::Contiguous { count, inner } => count * oracle_extent(inner),
        DatatypeTree::Vector { count, blocklength, stride, inner } => {
            ((count - 1) * *stride as usize + blocklength) * oracle_extent(inner)
        }
        DatatypeTree::Struct { extent, .. } => *extent,
    }
}

/// Labels each byte of one element with the kind stored there.
fn byte_labels(t: &DatatypeTree) -> Vec<Option<FundamentalKind>> {
    fn walk(t: &DatatypeTree, base: usize, out: &mut [Option<FundamentalKind>]) {
        match t {
            DatatypeTree::Fundamental(k) => {
                for b in &mut out[base..base + host_size(*k)] {
                    assert!(b.is_none(), "tree places two values on one byte");
                    *b = Some(*k);
                }
            }
            DatatypeTree::Contiguous { count, inner } => {
                let e = oracle_extent(inner);
                for i in 0..*count {
                    walk(inner, base + i * e, out);
                }
            }
            DatatypeTree::Vector { count, blocklength, stride, inner } => {
                let e = oracle_extent(inner);
                for b in 0..*count {
                    for j in 0..*blocklength {
                        walk(inner, base + (b * *stride as usize + j) * e, out);
                    }
                }
            }
            DatatypeTree::Struct { fields, .. } => {
                for (off, f) in fields {
                    walk(f, base + off, out);
                }
            }
        }
    }
    let mut out = vec![None; oracle_extent(t)];
    walk(t, 0, &mut out);
    out
}

/// Maximal runs of consecutive bytes holding the same kind.
fn runs(labels: &[Option<FundamentalKind>]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize, FundamentalKind)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let Some(k) = *l else { continue };
        match out.last_mut() {
            Some((off, len, kind)) if *kind == k && *off + *len == i => *len += 1,
            _ => out.push((i, 1, k)),
        }
    }
    out.into_iter().map(|(o, l, _)| (o, l)).collect()
}

/// Random tree of depth at most 3 with counts at most 8.
fn random_tree(rng: &mut ChaCha8Rng, depth: u32) -> DatatypeTree {
    if depth == 0 || rng.gen_bool(0.25) {
        return DatatypeTree::Fundamental(*KINDS.choose(rng).unwrap());
    }
    match rng.gen_range(0..3) {
        0 => DatatypeTree::Contiguous {
            count: rng.gen_range(1..=8),
            inner: Box::new(random_tree(rng, depth - 1)),
        },
        1 => {
            let blocklength = rng.gen_range(1..=8);
            DatatypeTree::Vector {
                count: rng.gen_range(1..=8),
                blocklength,
                stride: (blocklength + rng.gen_range(0..=4)) as i64,
                inner: Box::new(random_tree(rng, depth - 1)),
            }
        }
        _ => {
            let mut fields = Vec::new();
            let mut at = 0;
            for _ in 0..rng.gen_range(1..=4) {
                at += rng.gen_range(0..8);
                let f = random_tree(rng, depth - 1);
                let e = oracle_extent(&f);
                fields.push((at, f));
                at += e;
            }
            fields.shuffle(rng);
            DatatypeTree::Struct {
                fields,
                extent: at + rng.gen_range(0..8),
            }
        }
    }
}

fn bounded_tree(rng: &mut ChaCha8Rng) -> DatatypeTree {
    loop {
        let t = random_tree(rng, 3);
        if oracle_extent(&t) <= 1 << 15 {
            return t;
        }
    }
}

fn layout_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut segments = 0;
    for i in 0..1000 {
        let t = bounded_tree(&mut rng);
        let labels = byte_labels(&t);
        let want = runs(&labels);
        let c = t.commit().map_err(|e| format!("tree {i}: {e}"))?;
        ensure(c.extent() == labels.len(), || format!("tree {i}: extent {} vs {}", c.extent(), labels.len()))?;
        let size = labels.iter().flatten().count();
        ensure(c.size() == size, || format!("tree {i}: size {} vs {size}", c.size()))?;
        ensure(c.spans() == want, || format!("tree {i}: segments {:?} vs {want:?}", c.spans()))?;
        segments += want.len();
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("1000 trees, {segments} segments"))
}

fn struct_with_gaps() -> Outcome {
    use FundamentalKind::*;
    #[repr(C)]
    struct MyType {
        a: i32,
        b: [i32; 3],
        c: f64,
        d: i8,
    }
    let t = DatatypeTree::for_layout(&smpi::layout_of!(MyType { a, b, c, d })).map_err(|e| e.to_string())?;
    let by_hand = DatatypeTree::Struct {
        fields: vec![
            (0, DatatypeTree::Fundamental(Int32)),
            (4, DatatypeTree::Contiguous { count: 3, inner: Box::new(DatatypeTree::Fundamental(Int32)) }),
            (16, DatatypeTree::Fundamental(Float64)),
            (24, DatatypeTree::Fundamental(Int8)),
        ],
        extent: 32,
    };
    ensure(t == by_hand, || format!("layout_of! built {t:?}"))?;
    let labels = byte_labels(&t);
    let want = vec![(0, 16), (16, 8), (24, 1)];
    ensure(runs(&labels) == want, || format!("oracle itself disagrees: {:?}", runs(&labels)))?;
    ensure(labels.iter().flatten().count() == 25 && labels.len() == 32, || "oracle size/extent".into())?;
    let c = t.commit().map_err(|e| e.to_string())?;
    ensure((c.size(), c.extent()) == (25, 32), || format!("size {} extent {}", c.size(), c.extent()))?;
    ensure(c.spans() == want, || format!("segments {:?}", c.spans()))?;
    Ok(format!("segments {want:?}"))
}

fn pack_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let mut bytes = 0;
    for i in 0..1000 {
        let t = bounded_tree(&mut rng);
        let labels = byte_labels(&t);
        let extent = labels.len();
        let count = rng.gen_range(1..=3);
        let c = t.commit().map_err(|e| e.to_string())?;
        let mut source = vec![0u8; extent * count];
        rng.fill(&mut source[..]);
        let packed = c.pack(&source, count).map_err(|e| e.to_string())?;
        let covered: Vec<usize> =
            (0..extent * count).filter(|at| labels[at % extent].is_some()).collect();
        ensure(packed.len() == covered.len(), || format!("pair {i}: packed {} bytes", packed.len()))?;
        let mut dest = vec![0u8; source.len()];
        c.unpack(&packed, count, &mut dest).map_err(|e| e.to_string())?;
        for &at in &covered {
            ensure(dest[at] == source[at], || format!("pair {i}: byte {at} differs"))?;
        }
        bytes += packed.len();
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("1000 pairs, {bytes} bytes"))
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn signatures() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen: HashMap<u64, Vec<u8>> = HashMap::new();
    let mut encodings = HashSet::new();
    while encodings.len() < 10_000 {
        let t = random_tree(&mut rng, 3);
        let enc = t.canonical_encoding();
        if !encodings.insert(enc.clone()) {
            continue;
        }
        let sig = t.signature();
        ensure(sig == fnv(&enc), || "signature is not FNV-1a of the encoding".into())?;
        if let Some(other) = seen.insert(sig, enc.clone()) {
            return Err(format!("collision between {other:02x?} and {enc:02x?}"));
        }
    }
    // Structurally equal trees built independently from the same seed.
    for pair in 0..1000u64 {
        let a = random_tree(&mut ChaCha8Rng::seed_from_u64(pair), 3);
        let b = random_tree(&mut ChaCha8Rng::seed_from_u64(pair), 3);
        ensure(a == b, || "generator is not deterministic".into())?;
        let (sa, sb) = (a.signature(), b.commit().map_err(|e| e.to_string())?.signature());
        ensure(sa == sb, || format!("pair {pair}: {sa:#x} vs {sb:#x}"))?;
    }
    Ok(format!("{} distinct encodings, 1000 equal pairs", seen.len()))
}

// ---------------------------------------------------------------------------
// Jobs on the in-process transport

/// Runs `f` on `n` thread ranks. Ok(result) or Err(abort code) per rank.
fn job<R, F>(n: u32, level: AssertLevel, abort_code: i32, f: F) -> Vec<Result<R, i32>>
where
    R: Send + 'static,
    F: Fn(&Session) -> R + Send + Sync + 'static,
{
    let world = InProcWorld::new(n);
    let f = Arc::new(f);
    let (tx, rx) = mpsc::channel();
    for rank in 0..n {
        let (world, f, tx) = (Arc::clone(&world), Arc::clone(&f), tx.clone());
        let h = std::thread::spawn(move || {
            let cfg = SessionConfig::inproc(&world, rank).with_assert_level(level).with_abort_code(abort_code);
            let s = Session::init(cfg).expect("session");
            f(&s)
        });
        std::thread::spawn(move || {
            let r = h.join().map_err(|p| abort_code_of(p.as_ref()).unwrap_or(-1));
            let _ = tx.send((rank, r));
        });
    }
    drop(tx);
    let mut out: Vec<Option<Result<R, i32>>> = (0..n).map(|_| None).collect();
    for _ in 0..n {
        let (rank, r) = rx.recv_timeout(Duration::from_secs(60)).expect("job hung");
        out[rank as usize] = Some(r);
    }
    out.into_iter().map(Option::unwrap).collect()
}

fn all_done<R>(results: Vec<Result<R, i32>>) -> Result<Vec<R>, String> {
    results
        .into_iter()
        .enumerate()
        .map(|(r, x)| x.map_err(|code| format!("rank {r} ended with {code}")))
        .collect()
}

fn inputs_i64(trial: u64, rank: u32, len: usize) -> Vec<i64> {
    let mut r = ChaCha8Rng::seed_from_u64(trial << 8 | u64::from(rank));
    (0..len).map(|_| r.gen()).collect()
}

fn inputs_f64(trial: u64, rank: u32, len: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(trial << 8 | u64::from(rank) | 1 << 63);
    (0..len).map(|_| r.gen_range(-1e9..1e9)).collect()
}

/// Left fold over ranks 0, 1, ..., n-1.
fn fold<T: Copy>(n: u32, input: impl Fn(u32) -> Vec<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    let mut acc = input(0);
    for r in 1..n {
        for (a, b) in acc.iter_mut().zip(input(r)) {
            *a = f(*a, b);
        }
    }
    acc
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|f| f.to_bits()).collect()
}

fn collective_trials(n: u32) -> Result<(), String> {
    let results = job(n, AssertLevel::Local, 1, move |s| -> Result<(), String> {
        let mut comm = s.world().map_err(|e| e.to_string())?;
        let me = comm.rank();
        for trial in 0..100u64 {
            let len = (trial % 9) as usize;
            let root = (trial % u64::from(n)) as u32;
            let here = |what: &str| format!("{n} ranks, {what}, trial {trial}, rank {me}");

            let want = inputs_i64(trial, root, len);
            let mine = if me == root { want.clone() } else { vec![0; len] };
            let got = comm.broadcast(mine, root).map_err(|e| e.to_string())?;
            ensure(got == want, || here("broadcast"))?;

            let got = comm.reduce(inputs_i64(trial, me, len), Sum, root).map_err(|e| e.to_string())?;
            if me == root {
                ensure(got == fold(n, |r| inputs_i64(trial, r, len), i64::wrapping_add), || here("integer sum"))?;
            }
            let got = comm.reduce(inputs_f64(trial, me, len), Sum, root).map_err(|e| e.to_string())?;
            if me == root {
                let want = fold(n, |r| inputs_f64(trial, r, len), |a, b| a + b);
                ensure(bits(&got) == bits(&want), || here("float sum"))?;
            }

            let got = comm.allreduce(inputs_f64(trial, me, len), Prod).map_err(|e| e.to_string())?;
            ensure(bits(&got) == bits(&fold(n, |r| inputs_f64(trial, r, len), |a, b| a * b)), || here("float product"))?;
            let got = comm.allreduce(inputs_i64(trial, me, len), Max).map_err(|e| e.to_string())?;
            ensure(got == fold(n, |r| inputs_i64(trial, r, len), i64::max), || here("max"))?;
            let got = comm.allreduce(inputs_i64(trial, me, len), Min).map_err(|e| e.to_string())?;
            ensure(got == fold(n, |r| inputs_i64(trial, r, len), i64::min), || here("min"))?;

            // Alltoallv with a random count matrix shared by all ranks.
            let mut shared = ChaCha8Rng::seed_from_u64(trial ^ 0xA11);
            let counts: Vec<Vec<usize>> =
                (0..n).map(|_| (0..n).map(|_| shared.gen_range(0..5)).collect()).collect();
            let item = |s: u32, d: u32, k: usize| (trial as i64) << 32 | i64::from(s) << 20 | i64::from(d) << 8 | k as i64;
            let mut send = Vec::new();
            let mut sdispl = Vec::new();
            for d in 0..n {
                sdispl.push(send.len());
                send.extend((0..counts[me as usize][d as usize]).map(|k| item(me, d, k)));
            }
            let rcounts: Vec<usize> = (0..n).map(|s| counts[s as usize][me as usize]).collect();
            let rdispl: Vec<usize> = (0..n as usize).map(|s| rcounts[..s].iter().sum()).collect();
            let total: usize = rcounts.iter().sum();
            let send = irregular(send, counts[me as usize].clone(), sdispl).map_err(|e| e.to_string())?;
            let recv = irregular(vec![0i64; total], rcounts.clone(), rdispl).map_err(|e| e.to_string())?;
            let (_, got) = comm.alltoallv(send, recv).map_err(|e| e.to_string())?;
            let want: Vec<i64> = (0..n).flat_map(|s| (0..rcounts[s as usize]).map(move |k| item(s, me, k))).collect();
            ensure(got == want, || here("alltoallv"))?;
        }
        Ok(())
    });
    for r in all_done(results)? {
        r?;
    }
    Ok(())
}

fn collectives() -> Outcome {
    let start = Instant::now();
    for n in [1, 2, 3, 4, 8] {
        collective_trials(n)?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok("ranks 1, 2, 3, 4, 8 with 100 inputs each".into())
}

fn non_overtaking() -> Outcome {
    let results = job(2, AssertLevel::Local, 1, |s| {
        let mut comm = s.world().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(comm.rank()) + 6);
        let yield_some = |rng: &mut ChaCha8Rng| (0..rng.gen_range(0..3)).for_each(|_| std::thread::yield_now());
        let mut broken = 0;
        for rep in 0..1000u32 {
            if comm.rank() == 0 {
                yield_some(&mut rng);
                comm.send(single(2 * rep), 1, 9).unwrap();
                yield_some(&mut rng);
                comm.send(single(2 * rep + 1), 1, 9).unwrap();
            } else {
                yield_some(&mut rng);
                let (a, _) = comm.recv(single(0u32), 0, 9).unwrap();
                yield_some(&mut rng);
                let (b, _) = comm.recv(single(0u32), 0, 9).unwrap();
                if (a, b) != (2 * rep, 2 * rep + 1) {
                    broken += 1;
                }
            }
        }
        broken
    });
    let broken: u32 = all_done(results)?.into_iter().sum();
    ensure(broken == 0, || format!("{broken} of 1000 repetitions out of order"))?;
    Ok("1000 repetitions in order".into())
}

fn request_equivalence() -> Outcome {
    const SIZES: [usize; 4] = [0, 1, 4096, 1 << 20];
    let results = job(2, AssertLevel::Metadata, 1, |s| -> Result<(), String> {
        let mut comm = s.world().map_err(|e| e.to_string())?;
        let peer = 1 - comm.rank();
        for (i, &len) in SIZES.iter().enumerate() {
            let payload = |from: u32| -> Vec<u8> { (0..len).map(|k| (k * 31 + from as usize * 7 + i) as u8).collect() };
            let tag = i as i32;
            let mut outcomes = Vec::new();
            for by_test in [true, false] {
                let out = payload(comm.rank());
                let out_ptr = out.as_ptr();
                let inb = vec![0u8; len];
                let in_ptr = inb.as_ptr();
                let mut rreq = comm.irecv(inb, peer, tag).map_err(|e| e.to_string())?;
                let mut sreq = comm.isend(out, peer, tag).map_err(|e| e.to_string())?;
                let (sent, got) = if by_test {
                    let sent = loop {
                        if let Some(b) = sreq.test().map_err(|f| f.error.to_string())? {
                            break b;
                        }
                    };
                    let got = loop {
                        if let Some((b, _)) = rreq.test().map_err(|f| f.error.to_string())? {
                            break b;
                        }
                        std::thread::yield_now();
                    };
                    ensure(rreq.state() == RequestState::Consumed, || "request not consumed".into())?;
                    (sent, got)
                } else {
                    (sreq.wait().map_err(|f| f.error.to_string())?, rreq.wait().map_err(|f| f.error.to_string())?.0)
                };
                ensure(sent.as_ptr() == out_ptr, || format!("{len} bytes: send buffer not returned"))?;
                ensure(got.as_ptr() == in_ptr, || format!("{len} bytes: receive buffer not returned"))?;
                ensure(got == payload(peer), || format!("{len} bytes: wrong data"))?;
                outcomes.push(got);
            }
            ensure(outcomes[0] == outcomes[1], || format!("{len} bytes: test and wait differ"))?;
        }
        Ok(())
    });
    for r in all_done(results)? {
        r?;
    }
    Ok(format!("sizes {SIZES:?}"))
}

fn smpirun(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_smpirun"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run smpirun: {e}"))?;
    Ok((out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned()))
}

fn error_injection() -> Outcome {
    // Six i32 into room for four: the full 24 bytes are reported.
    let r = job(2, AssertLevel::Local, 1, |s| {
        let mut comm = s.world().unwrap();
        if comm.rank() == 0 {
            comm.send(vec![1i32; 6], 1, 0).unwrap();
            None
        } else {
            Some(comm.recv(vec![0i32; 4], 0, 0).map(|_| ()))
        }
    });
    let trunc = all_done(r)?.remove(1).unwrap();
    ensure(trunc == Err(Error::Truncation { actual_bytes: 24 }), || format!("truncation gave {trunc:?}"))?;

    let mismatch = |level| {
        let r = job(2, level, 1, |s| {
            let mut comm = s.world().unwrap();
            if comm.rank() == 0 {
                comm.send(single(-2i32), 1, 0).unwrap();
                None
            } else {
                Some(comm.recv(single(0u32), 0, 0).map(|(v, _)| v))
            }
        });
        all_done(r).map(|mut v| v.remove(1).unwrap())
    };
    let checked = mismatch(AssertLevel::Metadata)?;
    ensure(matches!(checked, Err(Error::TypeMismatch { .. })), || format!("level 2 gave {checked:?}"))?;
    let raw = mismatch(AssertLevel::Off)?;
    ensure(raw == Ok((-2i32) as u32), || format!("level 0 gave {raw:?}"))?;

    let r = job(4, AssertLevel::Communication, 13, |s| {
        let mut comm = s.world().unwrap();
        let len = if comm.rank() == 1 { 2 } else { 5 };
        let _ = comm.broadcast(vec![0u64; len], 0);
    });
    let codes: Vec<Option<i32>> = r.into_iter().map(|x| x.err()).collect();
    ensure(codes == [Some(13); 4], || format!("level 3 mismatch ended ranks with {codes:?}"))?;

    for transport in ["inproc", "tcp"] {
        let (code, _) = smpirun(&[
            "--ranks", "4", "--transport", transport, "--assert-level", "3", "--example", "bcast-mismatch", "--abort-code", "13",
        ])?;
        ensure(code == 13, || format!("launcher on {transport} exited with {code}"))?;
        let (code, _) = smpirun(&["--ranks", "3", "--transport", transport, "--example", "abort", "--abort-code", "21"])?;
        ensure(code == 21, || format!("abort on {transport} exited with {code}"))?;
    }
    Ok("truncation 24 bytes, mismatch at level 2, raw at level 0, abort codes propagated".into())
}

fn backend_equivalence() -> Outcome {
    for seed in ["1", "42", "7"] {
        let args = |t| ["--ranks", "4", "--example", "conformance", "--seed", seed, "--transport", t];
        let (code, inproc) = smpirun(&args("inproc"))?;
        ensure(code == 0, || format!("seed {seed}: inproc exited {code}:\n{inproc}"))?;
        let start = Instant::now();
        let (code, tcp) = smpirun(&args("tcp"))?;
        let took = start.elapsed();
        ensure(code == 0, || format!("seed {seed}: tcp exited {code}:\n{tcp}"))?;
        ensure(took < Duration::from_secs(60), || format!("seed {seed}: tcp took {took:?}"))?;
        ensure(inproc == tcp, || format!("seed {seed}: transcripts differ\n{inproc}\n---\n{tcp}"))?;
        ensure(inproc.lines().count() > 10, || format!("seed {seed}: short transcript"))?;
    }
    Ok("seeds 1, 42, 7 on 4 ranks".into())
}

fn golden_bytes() -> Outcome {
    let text = include_str!("golden/frame.hex");
    let golden: Vec<u8> = text
        .lines()
        .map(|l| l.split('#').next().unwrap())
        .flat_map(str::split_whitespace)
        .map(|h| u8::from_str_radix(h, 16).map_err(|e| format!("bad hex {h:?}: {e}")))
        .collect::<Result<_, _>>()?;
    ensure(golden.len() == 48, || format!("golden file holds {} bytes", golden.len()))?;
    let int32 = DatatypeTree::fundamental(FundamentalKind::Int32).commit().map_err(|e| e.to_string())?;
    ensure(int32.signature() == fnv(&[0x01, 0x05, 0x04, 0, 0, 0]), || "INT32 signature".into())?;
    let env = Envelope::new(FrameKind::Data, 1, 0, 1, 7).with_signature(int32.signature());
    let mut env4 = env;
    env4.payload_len = 4;
    let encoded = encode_frame(&env4, &1i32.to_le_bytes());
    ensure(encoded == golden, || format!("encoded {encoded:02x?}"))?;
    let decoded = decode_header(&golden, DEFAULT_MAX_PAYLOAD).map_err(|e| e.to_string())?;
    ensure(decoded == env4, || format!("decoded {decoded:?}"))?;
    Ok("48 bytes match".into())
}

type Value = Vec<(String, Vec<(i64, bool)>)>;

fn random_value(rng: &mut ChaCha8Rng) -> Value {
    (0..rng.gen_range(0..6))
        .map(|_| {
            let s: String = (0..rng.gen_range(0..12)).map(|_| rng.gen::<char>()).collect();
            (s, (0..rng.gen_range(0..6)).map(|_| (rng.gen(), rng.gen())).collect())
        })
        .collect()
}

fn serialization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let v = random_value(&mut rng);
        let n: f64 = rng.gen();
        let back: Value = from_bytes(&to_bytes(&v)).map_err(|e| format!("value {i}: {e}"))?;
        ensure(back == v, || format!("value {i} changed"))?;
        let back: (f64, String) = from_bytes(&to_bytes(&(n, v.len().to_string()))).map_err(|e| e.to_string())?;
        ensure(back.0.to_bits() == n.to_bits(), || format!("float {i} changed"))?;
    }
    let mut detected = 0;
    for i in 0..1000 {
        let v = random_value(&mut rng);
        let mut bytes = to_bytes(&v);
        match i % 4 {
            // Cut short.
            0 if !bytes.is_empty() => bytes.truncate(rng.gen_range(0..bytes.len())),
            // Trailing garbage.
            1 => bytes.push(rng.gen()),
            // Outer length claims more items than present.
            2 if bytes.len() >= 8 => {
                let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) + rng.gen_range(1..1 << 40);
                bytes[..8].copy_from_slice(&n.to_le_bytes());
            }
            // Arbitrary bytes.
            _ => {
                bytes = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                match catch_unwind(|| from_bytes::<Value>(&bytes)) {
                    Ok(Ok(_)) => continue,
                    Ok(Err(Error::InvalidArgument(_))) => {
                        detected += 1;
                        continue;
                    }
                    Ok(Err(e)) => return Err(format!("case {i}: wrong error {e:?}")),
                    Err(_) => return Err(format!("case {i}: decoder panicked")),
                }
            }
        }
        match catch_unwind(|| from_bytes::<Value>(&bytes)) {
            Ok(Err(Error::InvalidArgument(_))) => detected += 1,
            Ok(other) => return Err(format!("case {i}: corrupt input gave {other:?}")),
            Err(_) => return Err(format!("case {i}: decoder panicked")),
        }
    }
    Ok(format!("1000 roundtrips, {detected} of 1000 corrupt inputs rejected"))
}

fn compile_fail() -> Outcome {
    let cases: Vec<_> = std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/ui"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "rs"))
        .collect();
    ensure(cases.len() >= 3, || format!("only {} cases", cases.len()))?;
    let t = trybuild::TestCases::new();
    t.compile_fail("tests/ui/*.rs");
    // Dropping the runner builds every case and panics if one compiles or
    // fails with different diagnostics.
    drop(t);
    Ok(format!("{} cases rejected", cases.len()))
}
