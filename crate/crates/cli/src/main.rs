use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use smpi::AssertLevel;
use smpi_run::{launch, Example, LaunchConfig, TransportKind};

/// Launch a job of N ranks and run one example program on it.
#[derive(Debug, Parser)]
#[command(name = "smpirun", version)]
struct Args {
    /// Number of ranks.
    #[arg(short = 'n', long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    ranks: u32,
    #[arg(long, value_enum, default_value_t = TransportKind::Inproc)]
    transport: TransportKind,
    /// Runtime checking level, 0 to 3.
    #[arg(long, default_value = "1", value_parser = parse_level)]
    assert_level: AssertLevel,
    #[arg(long, value_enum)]
    example: Example,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Seconds before the job is killed.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Coordinator address for tcp (default: a free loopback port).
    #[arg(long, value_name = "HOST:PORT")]
    coord: Option<String>,
    /// Exit code of every rank when a runtime assertion fails.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(i32).range(1..=255))]
    abort_code: i32,
    /// Run as one rank of a tcp job, configured by SMPI_* variables.
    #[arg(long, hide = true)]
    worker: bool,
}

fn parse_level(s: &str) -> Result<AssertLevel, String> {
    s.parse().map_err(|e: smpi::Error| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = if args.worker {
        launch::run_worker(args.example, args.seed)
    } else {
        launch::launch(&LaunchConfig {
            ranks: args.ranks,
            transport: args.transport,
            assert_level: args.assert_level,
            example: args.example,
            seed: args.seed,
            timeout: Duration::from_secs(args.timeout),
            coord: args.coord,
            abort_code: args.abort_code,
        })
    };
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
