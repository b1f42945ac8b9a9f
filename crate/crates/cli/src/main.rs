//! `cwseg`: clockwork video segmentation from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 data or contract
//! error (bad formats, shape mismatches, invalid schedules).
//!
//! `CWSEG_THREADS` caps the worker pool.

mod bench;
mod eval;
mod gen;
mod report;
mod segment;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwseg_core::{ClockSchedule, SkipPolicy};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DATA: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cwseg", version, about = "Clockwork FCN video segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment every frame of a sequence under a clock schedule.
    Segment(segment::SegmentArgs),
    /// Score predicted masks against ground truth.
    Eval(eval::EvalArgs),
    /// Time full inference against a clock schedule on the same frames.
    Bench(bench::BenchArgs),
    /// Write a deterministic pseudorandom weight store.
    GenWeights(gen::GenWeightsArgs),
    /// Write a synthetic static-scene sequence and its manifest.
    Synth(gen::SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    Always,
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    ReuseFinal,
    FuseCachedDeep,
}

impl From<PolicyArg> for SkipPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::ReuseFinal => SkipPolicy::ReuseFinal,
            PolicyArg::FuseCachedDeep => SkipPolicy::FuseCachedDeep,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, value_enum, default_value_t = ScheduleKind::Adaptive)]
    pub schedule: ScheduleKind,
    /// Stage-2 period for --schedule fixed.
    #[arg(long, default_value_t = 2)]
    pub period2: u64,
    /// Stage-3 period for --schedule fixed.
    #[arg(long, default_value_t = 4)]
    pub period3: u64,
    /// Change threshold for --schedule adaptive. Negative values fire every frame.
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::FuseCachedDeep)]
    pub skip_policy: PolicyArg,
}

impl ScheduleArgs {
    pub fn schedule(&self) -> cwseg_core::Result<ClockSchedule> {
        match self.schedule {
            ScheduleKind::Always => Ok(ClockSchedule::Always),
            ScheduleKind::Fixed => ClockSchedule::fixed(self.period2, self.period3),
            ScheduleKind::Adaptive => ClockSchedule::adaptive(self.theta),
        }
    }
}

#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Prints a report to stdout and optionally to `out`. A closed stdout (as
/// in `cwseg eval ... | head`) is not an error.
pub fn emit(text: &str, out: Option<&std::path::Path>) -> anyhow::Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}").and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(out) = out {
        std::fs::write(out, format!("{text}\n"))
            .map_err(|e| anyhow::Error::new(e).context(format!("writing {}", out.display())))?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cwseg_core::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_DATA };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<Usage>().is_some() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("CWSEG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok());
    let result = cwseg_core::exec::with_threads(threads, move || match cli.command {
        Command::Segment(a) => segment::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Bench(a) => bench::run(a),
        Command::GenWeights(a) => gen::run_gen_weights(a),
        Command::Synth(a) => gen::run_synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cwseg: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
