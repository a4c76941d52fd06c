#![allow(dead_code)]

use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use smpi::{abort_code_of, AssertLevel, InProcWorld, Session, SessionConfig};

#[derive(Debug, PartialEq)]
pub enum Outcome<R> {
    Done(R),
    Aborted(i32),
    Panicked(String),
}

impl<R: std::fmt::Debug> Outcome<R> {
    pub fn unwrap(self) -> R {
        match self {
            Outcome::Done(r) => r,
            other => panic!("rank did not finish: {other:?}"),
        }
    }
}

pub const LIMIT: Duration = Duration::from_secs(60);

/// Runs `f` on `n` thread ranks and collects each rank's outcome. Fails the
/// test if the job does not finish within [`LIMIT`].
pub fn run_with<R, F>(n: u32, configure: impl Fn(SessionConfig) -> SessionConfig + Send + Sync + 'static, f: F) -> Vec<Outcome<R>>
where
    R: Send + 'static,
    F: Fn(&Session) -> R + Send + Sync + 'static,
{
    let (tx, rx) = mpsc::channel();
    let f = Arc::new(f);
    let configure = Arc::new(configure);
    std::thread::spawn(move || {
        let world = InProcWorld::new(n);
        let outcomes = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .map(|rank| {
                    let world = Arc::clone(&world);
                    let f = Arc::clone(&f);
                    let configure = Arc::clone(&configure);
                    s.spawn(move || {
                        let session = Session::init(configure(SessionConfig::inproc(&world, rank))).unwrap();
                        f(&session)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(r) => Outcome::Done(r),
                    Err(payload) => match abort_code_of(payload.as_ref()) {
                        Some(code) => Outcome::Aborted(code),
                        None => Outcome::Panicked(
                            payload
                                .downcast_ref::<String>()
                                .cloned()
                                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                                .unwrap_or_default(),
                        ),
                    },
                })
                .collect::<Vec<_>>()
        });
        let _ = tx.send(outcomes);
    });
    rx.recv_timeout(LIMIT).expect("job timed out")
}

pub fn run<R, F>(n: u32, level: AssertLevel, f: F) -> Vec<Outcome<R>>
where
    R: Send + 'static,
    F: Fn(&Session) -> R + Send + Sync + 'static,
{
    run_with(n, move |c| c.with_assert_level(level), f)
}

/// Like [`run`] but every rank must finish normally.
pub fn run_ok<R, F>(n: u32, level: AssertLevel, f: F) -> Vec<R>
where
    R: Send + std::fmt::Debug + 'static,
    F: Fn(&Session) -> R + Send + Sync + 'static,
{
    run(n, level, f).into_iter().map(Outcome::unwrap).collect()
}
