//! Starting ranks and collecting their exit codes.

use std::io;
use std::net::TcpListener;
use std::process::{Child, Command};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use clap::ValueEnum;
use smpi::{abort_code_of, AssertLevel, InProcWorld, Session, SessionConfig};

use crate::examples::{self, Example, Output};

/// Exit code when the job exceeds its time limit.
pub const TIMEOUT_EXIT: i32 = 124;
/// Exit code of a rank that panicked, or whose example failed.
pub const FAILURE_EXIT: i32 = 1;
/// How long the remaining children get after one of them fails.
const GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Inproc,
    Tcp,
}

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    pub ranks: u32,
    pub transport: TransportKind,
    pub assert_level: AssertLevel,
    pub example: Example,
    pub seed: u64,
    pub timeout: Duration,
    /// Coordinator address for TCP. A free loopback port when unset.
    pub coord: Option<String>,
    /// Exit code used when an assertion fails.
    pub abort_code: i32,
}

/// Runs the job and returns the launcher's exit code: 0 iff every rank
/// exited 0, otherwise the exit code of the lowest failing rank.
pub fn launch(cfg: &LaunchConfig) -> i32 {
    let code = match cfg.transport {
        TransportKind::Inproc => launch_inproc(cfg),
        TransportKind::Tcp => launch_tcp(cfg).unwrap_or_else(|e| {
            eprintln!("smpirun: cannot start ranks: {e}");
            FAILURE_EXIT
        }),
    };
    if code != 0 {
        eprintln!("smpirun: {} on {} ranks exited with {code}", cfg.example.name(), cfg.ranks);
    }
    code
}

/// Body of one rank: runs the example, gathers every rank's lines on rank 0
/// and prints them there. Returns this rank's exit code.
pub fn run_rank(session: &Session, example: Example, seed: u64) -> i32 {
    let Output { lines, failure } = examples::run(example, session, seed);
    let rank = session.world_rank();
    if let Some(why) = &failure {
        eprintln!("rank {rank}: {why}");
    }
    let code = if failure.is_some() { FAILURE_EXIT } else { 0 };
    match gather(session, lines) {
        Ok(Some(all)) => {
            for (r, lines) in all.into_iter().enumerate() {
                for line in lines {
                    if r == 0 {
                        println!("{line}");
                    } else {
                        println!("rank {r}: {line}");
                    }
                }
            }
            code
        }
        Ok(None) => code,
        Err(e) => {
            eprintln!("rank {rank}: collecting output failed: {e}");
            FAILURE_EXIT
        }
    }
}

const GATHER_TAG: i32 = 0;

fn gather(session: &Session, lines: Vec<String>) -> smpi::Result<Option<Vec<Vec<String>>>> {
    // A fresh communicator, so leftovers of a failed example cannot match.
    let mut comm = session.world()?;
    if comm.rank() != 0 {
        comm.send_serialized(&lines, 0, GATHER_TAG)?;
        return Ok(None);
    }
    let mut all = vec![lines];
    for r in 1..comm.size() {
        all.push(comm.recv_serialized::<Vec<String>>(r, GATHER_TAG)?.0);
    }
    Ok(Some(all))
}

fn launch_inproc(cfg: &LaunchConfig) -> i32 {
    let world = InProcWorld::new(cfg.ranks);
    let (tx, rx) = mpsc::channel();
    for rank in 0..cfg.ranks {
        let config = SessionConfig::inproc(&world, rank)
            .with_assert_level(cfg.assert_level)
            .with_abort_code(cfg.abort_code);
        let (tx, example, seed) = (tx.clone(), cfg.example, cfg.seed);
        let handle = std::thread::Builder::new().name(format!("rank-{rank}")).spawn(move || {
            let session = match Session::init(config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("rank {rank}: {e}");
                    return FAILURE_EXIT;
                }
            };
            run_rank(&session, example, seed)
        });
        let handle = match handle {
            Ok(h) => h,
            Err(e) => {
                eprintln!("smpirun: cannot spawn rank {rank}: {e}");
                return FAILURE_EXIT;
            }
        };
        // Joined on a helper thread so the launcher can give up on a hung job.
        std::thread::spawn(move || {
            let code = handle.join().unwrap_or_else(|p| abort_code_of(p.as_ref()).unwrap_or(FAILURE_EXIT));
            let _ = tx.send((rank, code));
        });
    }
    drop(tx);
    let deadline = Instant::now() + cfg.timeout;
    let mut codes = vec![None; cfg.ranks as usize];
    for _ in 0..cfg.ranks {
        match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
            Ok((rank, code)) => codes[rank as usize] = Some(code),
            Err(_) => {
                let stuck: Vec<usize> = (0..codes.len()).filter(|&r| codes[r].is_none()).collect();
                eprintln!("smpirun: timed out after {:?}; ranks {stuck:?} still running", cfg.timeout);
                return TIMEOUT_EXIT;
            }
        }
    }
    job_code(codes.into_iter().map(|c| c.unwrap_or(FAILURE_EXIT)))
}

fn job_code(codes: impl IntoIterator<Item = i32>) -> i32 {
    codes.into_iter().find(|&c| c != 0).unwrap_or(0)
}

fn free_loopback_addr() -> io::Result<String> {
    Ok(TcpListener::bind("127.0.0.1:0")?.local_addr()?.to_string())
}

fn launch_tcp(cfg: &LaunchConfig) -> io::Result<i32> {
    let coord = match &cfg.coord {
        Some(c) => c.clone(),
        None => free_loopback_addr()?,
    };
    let exe = std::env::current_exe()?;
    let mut children: Vec<Child> = Vec::with_capacity(cfg.ranks as usize);
    for rank in 0..cfg.ranks {
        let child = Command::new(&exe)
            .args(["--worker", "--example", &cfg.example.name(), "--seed", &cfg.seed.to_string()])
            .env("SMPI_TRANSPORT", "tcp")
            .env("SMPI_RANK", rank.to_string())
            .env("SMPI_WORLD_SIZE", cfg.ranks.to_string())
            .env("SMPI_COORD", &coord)
            .env("SMPI_ASSERT_LEVEL", cfg.assert_level.as_u8().to_string())
            .env("SMPI_ABORT_CODE", cfg.abort_code.to_string())
            .spawn();
        match child {
            Ok(c) => children.push(c),
            Err(e) => {
                kill_all(&mut children);
                return Err(e);
            }
        }
    }
    let deadline = Instant::now() + cfg.timeout;
    let mut grace: Option<Instant> = None;
    let mut codes: Vec<Option<i32>> = vec![None; children.len()];
    while codes.iter().any(Option::is_none) {
        for (rank, child) in children.iter_mut().enumerate() {
            if codes[rank].is_some() {
                continue;
            }
            if let Some(status) = child.try_wait()? {
                let code = exit_code(status);
                if code != 0 && grace.is_none() {
                    grace = Some(Instant::now() + GRACE);
                }
                codes[rank] = Some(code);
            }
        }
        let now = Instant::now();
        if now >= deadline {
            eprintln!("smpirun: timed out after {:?}", cfg.timeout);
            kill_all(&mut children);
            return Ok(TIMEOUT_EXIT);
        }
        if grace.is_some_and(|g| now >= g) {
            eprintln!("smpirun: a rank failed; stopping the rest");
            kill_all(&mut children);
            break;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    Ok(job_code(codes.into_iter().map(|c| c.unwrap_or(FAILURE_EXIT))))
}

fn kill_all(children: &mut [Child]) {
    for c in children {
        let _ = c.kill();
        let _ = c.wait();
    }
}

#[cfg(unix)]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status.code().or_else(|| status.signal().map(|s| 128 + s)).unwrap_or(FAILURE_EXIT)
}

#[cfg(not(unix))]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    status.code().unwrap_or(FAILURE_EXIT)
}

/// Entry point of a re-invoked rank: reads its identity from `SMPI_*`.
pub fn run_worker(example: Example, seed: u64) -> i32 {
    match Session::from_env() {
        Ok(session) => run_rank(&session, example, seed),
        Err(e) => {
            eprintln!("smpirun worker: {e}");
            FAILURE_EXIT
        }
    }
}
