//! Full per-frame inference versus a clockwork schedule on the same frames.
//!
//! Wall-clock numbers at toy scale are noisy, so each report also carries the
//! counted multiply-accumulate work of both runs. The two modes run in
//! lockstep, frame by frame, so a slow spell on the machine lands on both.
//! Best times are taken per frame across repeats and summed, and the wall
//! ratio is the median of the per-pass ratios.

use std::time::{Duration, Instant};

use crate::clockwork::{run_sequence, ClockSchedule, ClockworkRunner, SkipPolicy, StageTrace};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::net::{StageId, StagedNet, Work};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeTiming {
    pub schedule: ClockSchedule,
    /// Sum over frames of each frame's fastest repeat.
    pub wall_best: Duration,
    /// Mean wall time of a whole pass.
    pub wall_mean: Duration,
    /// Per-stage counterpart of `wall_best`.
    pub stage_elapsed: [Duration; 3],
    pub fuse_elapsed: Duration,
    pub firings: [u64; 3],
    pub work: [Work; 3],
}

impl ModeTiming {
    pub fn total_work(&self) -> Work {
        self.work.iter().fold(Work::default(), |a, &b| a + b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub repeat: usize,
    pub policy: SkipPolicy,
    pub full: ModeTiming,
    pub clockwork: ModeTiming,
    /// clockwork MACs / full MACs.
    pub work_ratio: f64,
    /// Median over repeats of clockwork pass time / full pass time, both
    /// measured in the same paired pass.
    pub wall_ratio: f64,
    /// `1 / work_ratio`.
    pub speedup_work: f64,
    /// `1 / wall_ratio`.
    pub speedup_wall: f64,
}

struct Run {
    per_frame: Vec<Duration>,
    traces: Vec<StageTrace>,
}

impl Run {
    fn total(&self) -> Duration {
        self.per_frame.iter().sum()
    }
}

/// One pass of both modes in lockstep: each frame is timed under full
/// inference and under `schedule` back to back, alternating which goes first,
/// so both see the same machine conditions.
fn paired_pass(
    net: &StagedNet,
    schedule: &ClockSchedule,
    policy: SkipPolicy,
    frames: &[Tensor],
    flip: bool,
) -> Result<(Run, Run)> {
    let mut full = ClockworkRunner::new(net, ClockSchedule::Always, policy)?;
    let mut clock = ClockworkRunner::new(net, *schedule, policy)?;
    let mut runs = [
        Run {
            per_frame: Vec::with_capacity(frames.len()),
            traces: Vec::with_capacity(frames.len()),
        },
        Run {
            per_frame: Vec::with_capacity(frames.len()),
            traces: Vec::with_capacity(frames.len()),
        },
    ];
    for (i, f) in frames.iter().enumerate() {
        let order = if (i % 2 == 0) != flip { [0, 1] } else { [1, 0] };
        for k in order {
            let runner = if k == 0 { &mut full } else { &mut clock };
            let t0 = Instant::now();
            let r = runner.push(f)?;
            runs[k].per_frame.push(t0.elapsed());
            runs[k].traces.push(r.trace);
        }
    }
    let [a, b] = runs;
    Ok((a, b))
}

fn summarize(schedule: ClockSchedule, runs: Vec<Run>) -> ModeTiming {
    let mean = runs.iter().map(Run::total).sum::<Duration>() / runs.len() as u32;
    let frames = runs[0].per_frame.len();
    let best_of = |f: &dyn Fn(&Run, usize) -> Duration| -> Duration {
        (0..frames)
            .map(|i| {
                runs.iter()
                    .map(|r| f(r, i))
                    .min()
                    .expect("at least one run")
            })
            .sum()
    };
    let wall_best = best_of(&|r, i| r.per_frame[i]);
    let mut stage_elapsed = [Duration::ZERO; 3];
    for s in StageId::ALL {
        stage_elapsed[s.index()] =
            best_of(&|r, i| r.traces[i].elapsed[s.index()].unwrap_or_default());
    }
    let fuse_elapsed = best_of(&|r, i| r.traces[i].fuse_elapsed);
    // Firings and work are identical across repeats.
    let mut firings = [0u64; 3];
    let mut work = [Work::default(); 3];
    for t in &runs[0].traces {
        for s in StageId::ALL {
            let i = s.index();
            if t.fired.contains(s) {
                firings[i] += 1;
            }
            work[i] += t.work[i];
        }
    }
    ModeTiming {
        schedule,
        wall_best,
        wall_mean: mean,
        stage_elapsed,
        fuse_elapsed,
        firings,
        work,
    }
}

/// Times full inference against `schedule` over `repeat` paired passes.
pub fn compare(
    net: &StagedNet,
    frames: &[Tensor],
    schedule: &ClockSchedule,
    policy: SkipPolicy,
    repeat: usize,
) -> Result<BenchReport> {
    if frames.is_empty() {
        return Err(Error::Contract("empty frame sequence".into()));
    }
    let repeat = repeat.max(1);
    let full_schedule = ClockSchedule::Always;
    // Warm-up so neither mode pays for first-touch allocation.
    paired_pass(net, schedule, policy, &frames[..1], false)?;
    let mut full = Vec::with_capacity(repeat);
    let mut clock = Vec::with_capacity(repeat);
    let mut ratios = Vec::with_capacity(repeat);
    for rep in 0..repeat {
        let (f, c) = paired_pass(net, schedule, policy, frames, rep % 2 == 1)?;
        ratios.push(c.total().as_secs_f64() / f.total().as_secs_f64());
        full.push(f);
        clock.push(c);
    }
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let wall_ratio = if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        (ratios[mid - 1] + ratios[mid]) / 2.0
    };
    let full = summarize(full_schedule, full);
    let clockwork = summarize(*schedule, clock);
    let work_ratio = clockwork.total_work().macs as f64 / full.total_work().macs as f64;
    Ok(BenchReport {
        frames: frames.len(),
        repeat,
        policy,
        full,
        clockwork,
        work_ratio,
        wall_ratio,
        speedup_work: 1.0 / work_ratio,
        speedup_wall: 1.0 / wall_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub stage3_firings: u64,
    pub macs: u64,
}

/// Adaptive runs over `frames` for each threshold, independent sequences
/// spread over `exec`.
pub fn sweep_theta(
    net: &StagedNet,
    frames: &[Tensor],
    policy: SkipPolicy,
    thetas: &[f64],
    exec: Exec,
) -> Result<Vec<SweepPoint>> {
    exec.try_map(thetas, |&theta| {
        let s = ClockSchedule::adaptive(theta)?;
        let (_, traces) = run_sequence(net, &s, policy, frames)?;
        Ok(SweepPoint {
            theta,
            stage3_firings: traces
                .iter()
                .filter(|t| t.fired.contains(StageId::Stage3))
                .count() as u64,
            macs: traces.iter().map(|t| t.total_work().macs).sum(),
        })
    })
}
