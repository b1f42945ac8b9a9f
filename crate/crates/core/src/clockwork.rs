//! Clockwork execution of the staged network over a frame sequence.
//!
//! Stage 1 runs on every frame. Deeper stages fire according to a
//! [`ClockSchedule`]; when stage 3 is skipped the output is produced from
//! persisted deep scores according to a [`SkipPolicy`].
//!
//! `prev_score` (the stage-2 score map used by the adaptive clock) is only
//! refreshed when stage 3 fires, so the change signal measures drift since
//! the last deep computation rather than since the previous frame.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::metrics::LabelMask;
use crate::net::{argmax_mask, StageId, StagedNet, Work};
use crate::tensor::{mean_abs_diff, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClockSchedule {
    /// Every stage on every frame.
    Always,
    /// Stage 2 fires when `frame % period2 == 0`, stage 3 when
    /// `frame % period3 == 0` and stage 2 fired.
    Fixed { period2: u64, period3: u64 },
    /// Stage 2 always fires; stage 3 fires when the mean absolute difference
    /// between the fresh score_pool4 and `prev_score` is strictly greater
    /// than `theta`.
    Adaptive { theta: f64 },
}

impl ClockSchedule {
    pub fn fixed(period2: u64, period3: u64) -> Result<Self> {
        let s = ClockSchedule::Fixed { period2, period3 };
        s.validate()?;
        Ok(s)
    }

    pub fn adaptive(theta: f64) -> Result<Self> {
        let s = ClockSchedule::Adaptive { theta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClockSchedule::Fixed { period2, period3 } if period2 == 0 || period3 == 0 => Err(
                Error::param("period", "fixed clock periods must be at least 1"),
            ),
            ClockSchedule::Adaptive { theta } if theta.is_nan() => {
                Err(Error::param("theta", "must not be NaN"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClockSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockSchedule::Always => write!(f, "always"),
            ClockSchedule::Fixed { period2, period3 } => write!(f, "fixed({period2},{period3})"),
            ClockSchedule::Adaptive { theta } => write!(f, "adaptive({theta})"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SkipPolicy {
    /// Return the last fully computed output unchanged.
    ReuseFinal,
    /// Fuse the cached deep scores with the freshest shallow scores.
    #[default]
    FuseCachedDeep,
}

impl SkipPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SkipPolicy::ReuseFinal => "reuse-final",
            SkipPolicy::FuseCachedDeep => "fuse-cached-deep",
        }
    }
}

impl FromStr for SkipPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reuse-final" => Ok(SkipPolicy::ReuseFinal),
            "fuse-cached-deep" => Ok(SkipPolicy::FuseCachedDeep),
            other => Err(Error::param("skip policy", format!("unknown '{other}'"))),
        }
    }
}

/// Set of fired stages.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StageSet(u8);

impl StageSet {
    pub const ALL: StageSet = StageSet(0b111);

    pub fn empty() -> Self {
        StageSet(0)
    }

    pub fn with(mut self, stage: StageId) -> Self {
        self.insert(stage);
        self
    }

    pub fn insert(&mut self, stage: StageId) {
        self.0 |= 1 << stage.index();
    }

    pub fn contains(self, stage: StageId) -> bool {
        self.0 & (1 << stage.index()) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = StageId> {
        StageId::ALL.into_iter().filter(move |&s| self.contains(s))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Stage 1 present, and stage 3 only together with stage 2.
    pub fn is_prefix_closed(self) -> bool {
        self.contains(StageId::Stage1)
            && (!self.contains(StageId::Stage3) || self.contains(StageId::Stage2))
    }
}

impl fmt::Debug for StageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Which stages fire on `frame_index`. `change` is the adaptive signal and is
/// required for adaptive schedules past frame 0.
pub fn should_fire(
    schedule: &ClockSchedule,
    frame_index: u64,
    change: Option<f64>,
) -> Result<StageSet> {
    schedule.validate()?;
    if frame_index == 0 {
        return Ok(StageSet::ALL);
    }
    let base = StageSet::empty().with(StageId::Stage1);
    Ok(match *schedule {
        ClockSchedule::Always => StageSet::ALL,
        ClockSchedule::Fixed { period2, period3 } => {
            let mut s = base;
            if frame_index.is_multiple_of(period2) {
                s.insert(StageId::Stage2);
                if frame_index.is_multiple_of(period3) {
                    s.insert(StageId::Stage3);
                }
            }
            s
        }
        ClockSchedule::Adaptive { theta } => {
            let change = change.ok_or_else(|| {
                Error::Contract(format!(
                    "adaptive schedule needs a change value on frame {frame_index}"
                ))
            })?;
            let s = base.with(StageId::Stage2);
            if change > theta {
                s.with(StageId::Stage3)
            } else {
                s
            }
        }
    })
}

/// Everything carried from one frame to the next.
#[derive(Clone, Debug)]
pub struct PersistedState {
    frame_shape: Shape,
    prev_score: Tensor,
    cached_score_pool3: Tensor,
    cached_score_pool4: Tensor,
    cached_score_fr: Tensor,
    cached_final: Tensor,
    frames_seen: u64,
}

impl PersistedState {
    /// score_pool4 as of the last frame on which stage 3 fired.
    pub fn prev_score(&self) -> &Tensor {
        &self.prev_score
    }

    pub fn cached_score_pool3(&self) -> &Tensor {
        &self.cached_score_pool3
    }

    pub fn cached_score_pool4(&self) -> &Tensor {
        &self.cached_score_pool4
    }

    pub fn cached_score_fr(&self) -> &Tensor {
        &self.cached_score_fr
    }

    pub fn cached_final(&self) -> &Tensor {
        &self.cached_final
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn frame_shape(&self) -> Shape {
        self.frame_shape
    }

    /// Bitwise equality of every cached tensor and counter.
    pub fn same_as(&self, other: &PersistedState) -> bool {
        self.frame_shape == other.frame_shape
            && self.frames_seen == other.frames_seen
            && self.prev_score == other.prev_score
            && self.cached_score_pool3 == other.cached_score_pool3
            && self.cached_score_pool4 == other.cached_score_pool4
            && self.cached_score_fr == other.cached_score_fr
            && self.cached_final == other.cached_final
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTrace {
    pub frame_index: u64,
    pub fired: StageSet,
    /// Adaptive change signal; `None` on frame 0 and for other schedules.
    pub change: Option<f64>,
    /// Wall time per stage, `None` for stages that did not run.
    pub elapsed: [Option<Duration>; 3],
    pub fuse_elapsed: Duration,
    pub work: [Work; 3],
}

impl StageTrace {
    pub fn total_work(&self) -> Work {
        self.work.iter().fold(Work::default(), |a, &b| a + b)
    }

    pub fn total_elapsed(&self) -> Duration {
        self.elapsed.iter().flatten().sum::<Duration>() + self.fuse_elapsed
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub mask: LabelMask,
    pub final_scores: Tensor,
    pub state: PersistedState,
    pub trace: StageTrace,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let t0 = Instant::now();
    let v = f()?;
    Ok((v, t0.elapsed()))
}

/// Processes one frame. `state` must be `None` exactly for the first frame.
pub fn step(
    net: &StagedNet,
    schedule: &ClockSchedule,
    policy: SkipPolicy,
    state: Option<PersistedState>,
    frame: &Tensor,
) -> Result<StepOutput> {
    schedule.validate()?;
    if let Some(s) = &state {
        if s.frame_shape != frame.shape() {
            return Err(Error::shape(
                format!(
                    "frame {} shape (resolution changed mid-sequence)",
                    s.frames_seen
                ),
                s.frame_shape,
                frame.shape(),
            ));
        }
    }
    let index = state.as_ref().map_or(0, |s| s.frames_seen);
    let mut elapsed = [None; 3];
    let mut work = [Work::default(); 3];

    let (s1, t1) = timed(|| net.run_stage1(frame))?;
    elapsed[0] = Some(t1);
    work[0] = s1.work;

    let adaptive = matches!(schedule, ClockSchedule::Adaptive { .. });
    let mut change = None;
    let mut stage2 = None;
    let fired = if adaptive {
        let (s2, t2) = timed(|| net.run_stage2(&s1.pool3_features))?;
        if let Some(st) = &state {
            change = Some(mean_abs_diff(&s2.score_pool4, &st.prev_score)?);
        }
        elapsed[1] = Some(t2);
        work[1] = s2.work;
        stage2 = Some(s2);
        should_fire(schedule, index, change)?
    } else {
        let fired = should_fire(schedule, index, None)?;
        if fired.contains(StageId::Stage2) {
            let (s2, t2) = timed(|| net.run_stage2(&s1.pool3_features))?;
            elapsed[1] = Some(t2);
            work[1] = s2.work;
            stage2 = Some(s2);
        }
        fired
    };
    debug_assert!(fired.is_prefix_closed());

    let score_pool4 = match (&stage2, &state) {
        (Some(s2), _) => s2.score_pool4.clone(),
        (None, Some(st)) => st.cached_score_pool4.clone(),
        (None, None) => unreachable!("frame 0 fires every stage"),
    };

    let (score_fr, final_scores, prev_score, fuse_elapsed) = if fired.contains(StageId::Stage3) {
        let s2 = stage2.as_ref().expect("prefix rule");
        let (s3, t3) = timed(|| net.run_stage3(&s2.pool4_features))?;
        elapsed[2] = Some(t3);
        work[2] = s3.work;
        let (fin, tf) =
            timed(|| net.fuse_and_upsample(&s3.score_fr, &score_pool4, &s1.score_pool3))?;
        (s3.score_fr, fin, score_pool4.clone(), tf)
    } else {
        let st = state.as_ref().expect("frame 0 fires every stage");
        let (fin, tf) = match policy {
            SkipPolicy::ReuseFinal => (st.cached_final.clone(), Duration::ZERO),
            SkipPolicy::FuseCachedDeep => {
                timed(|| net.fuse_and_upsample(&st.cached_score_fr, &score_pool4, &s1.score_pool3))?
            }
        };
        (st.cached_score_fr.clone(), fin, st.prev_score.clone(), tf)
    };

    let mask = argmax_mask(&final_scores);
    let new_state = PersistedState {
        frame_shape: frame.shape(),
        prev_score,
        cached_score_pool3: s1.score_pool3,
        cached_score_pool4: score_pool4,
        cached_score_fr: score_fr,
        cached_final: final_scores.clone(),
        frames_seen: index + 1,
    };
    Ok(StepOutput {
        mask,
        final_scores,
        state: new_state,
        trace: StageTrace {
            frame_index: index,
            fired,
            change,
            elapsed,
            fuse_elapsed,
            work,
        },
    })
}

/// Output of one frame pushed through a [`ClockworkRunner`].
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub mask: LabelMask,
    pub final_scores: Tensor,
    pub trace: StageTrace,
}

/// Owns the persisted state of one sequence.
#[derive(Clone, Debug)]
pub struct ClockworkRunner<'a> {
    net: &'a StagedNet,
    schedule: ClockSchedule,
    policy: SkipPolicy,
    state: Option<PersistedState>,
}

impl<'a> ClockworkRunner<'a> {
    pub fn new(net: &'a StagedNet, schedule: ClockSchedule, policy: SkipPolicy) -> Result<Self> {
        schedule.validate()?;
        Ok(ClockworkRunner {
            net,
            schedule,
            policy,
            state: None,
        })
    }

    pub fn push(&mut self, frame: &Tensor) -> Result<FrameResult> {
        let out = step(
            self.net,
            &self.schedule,
            self.policy,
            self.state.take(),
            frame,
        );
        match out {
            Ok(out) => {
                self.state = Some(out.state);
                Ok(FrameResult {
                    mask: out.mask,
                    final_scores: out.final_scores,
                    trace: out.trace,
                })
            }
            Err(e) => Err(e),
        }
    }

    pub fn state(&self) -> Option<&PersistedState> {
        self.state.as_ref()
    }
}

/// Folds [`step`] over `frames` from an empty state.
pub fn run_sequence(
    net: &StagedNet,
    schedule: &ClockSchedule,
    policy: SkipPolicy,
    frames: &[Tensor],
) -> Result<(Vec<LabelMask>, Vec<StageTrace>)> {
    if frames.is_empty() {
        return Err(Error::Contract("empty frame sequence".into()));
    }
    let mut runner = ClockworkRunner::new(net, *schedule, policy)?;
    let mut masks = Vec::with_capacity(frames.len());
    let mut traces = Vec::with_capacity(frames.len());
    for f in frames {
        let r = runner.push(f)?;
        masks.push(r.mask);
        traces.push(r.trace);
    }
    Ok((masks, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::gen_weights;
    use crate::net::{build_net, NetConfig};
    use crate::synth;
    use proptest::prelude::*;

    fn small_net() -> StagedNet {
        let cfg = NetConfig::new(3, 3, 2).with_classifier_width(8);
        build_net(cfg, &gen_weights(&cfg, 42).unwrap()).unwrap()
    }

    fn stage3_frames(traces: &[StageTrace]) -> Vec<u64> {
        traces
            .iter()
            .filter(|t| t.fired.contains(StageId::Stage3))
            .map(|t| t.frame_index)
            .collect()
    }

    #[test]
    fn fixed_2_4_pattern() {
        let s = ClockSchedule::fixed(2, 4).unwrap();
        let fired: Vec<_> = (0..8).map(|i| should_fire(&s, i, None).unwrap()).collect();
        let on = |st| {
            (0..8u64)
                .filter(|&i| fired[i as usize].contains(st))
                .collect::<Vec<_>>()
        };
        assert_eq!(on(StageId::Stage1), (0..8).collect::<Vec<_>>());
        assert_eq!(on(StageId::Stage2), vec![0, 2, 4, 6]);
        assert_eq!(on(StageId::Stage3), vec![0, 4]);
    }

    #[test]
    fn fixed_prefix_rule_with_coprime_periods() {
        // period3 = 3 would fire on frame 3, but stage 2 (period 2) does not.
        let s = ClockSchedule::fixed(2, 3).unwrap();
        let f3 = should_fire(&s, 3, None).unwrap();
        assert!(!f3.contains(StageId::Stage3));
        assert!(should_fire(&s, 6, None).unwrap().contains(StageId::Stage3));
    }

    #[test]
    fn adaptive_rules() {
        let s = ClockSchedule::adaptive(0.5).unwrap();
        assert_eq!(should_fire(&s, 0, None).unwrap(), StageSet::ALL);
        let low = should_fire(&s, 3, Some(0.1)).unwrap();
        assert_eq!(
            low,
            StageSet::empty()
                .with(StageId::Stage1)
                .with(StageId::Stage2)
        );
        assert_eq!(
            should_fire(&s, 3, Some(0.5)).unwrap(),
            low,
            "strict comparison"
        );
        assert_eq!(should_fire(&s, 3, Some(0.51)).unwrap(), StageSet::ALL);
        assert!(matches!(should_fire(&s, 1, None), Err(Error::Contract(_))));
    }

    #[test]
    fn schedule_validation() {
        assert!(ClockSchedule::fixed(0, 4).is_err());
        assert!(ClockSchedule::fixed(2, 0).is_err());
        assert!(ClockSchedule::adaptive(f64::NAN).is_err());
        assert!(ClockSchedule::adaptive(-1.0).is_ok());
    }

    #[test]
    fn static_video_never_refires() {
        let net = small_net();
        let f = synth::random_frame(3, 32, 32, 1);
        let frames = vec![f; 6];
        for policy in [SkipPolicy::ReuseFinal, SkipPolicy::FuseCachedDeep] {
            let s = ClockSchedule::adaptive(1e-6).unwrap();
            let (masks, traces) = run_sequence(&net, &s, policy, &frames).unwrap();
            assert_eq!(stage3_frames(&traces), vec![0]);
            assert!(masks.iter().all(|m| m == &masks[0]));
            assert!(traces[1..].iter().all(|t| t.change == Some(0.0)));
        }
    }

    #[test]
    fn fixed_on_identical_frames_runs_stage3_twice() {
        let net = small_net();
        let frames = vec![synth::random_frame(3, 32, 32, 2); 8];
        let (_, traces) = run_sequence(
            &net,
            &ClockSchedule::fixed(2, 4).unwrap(),
            SkipPolicy::default(),
            &frames,
        )
        .unwrap();
        assert_eq!(stage3_frames(&traces), vec![0, 4]);
        let convs: u64 = traces.iter().map(|t| t.work[2].convs).sum();
        assert_eq!(convs, 2 * 3);
    }

    #[test]
    fn single_frame_fires_everything() {
        let net = small_net();
        let (masks, traces) = run_sequence(
            &net,
            &ClockSchedule::adaptive(10.0).unwrap(),
            SkipPolicy::ReuseFinal,
            &[synth::random_frame(3, 32, 32, 3)],
        )
        .unwrap();
        assert_eq!(masks.len(), 1);
        assert_eq!(traces[0].fired, StageSet::ALL);
        assert_eq!(traces[0].change, None);
    }

    #[test]
    fn errors() {
        let net = small_net();
        let s = ClockSchedule::Always;
        assert!(matches!(
            run_sequence(&net, &s, SkipPolicy::default(), &[]),
            Err(Error::Contract(_))
        ));
        let frames = [
            synth::random_frame(3, 32, 32, 1),
            synth::random_frame(3, 64, 32, 1),
        ];
        let err = run_sequence(&net, &s, SkipPolicy::default(), &frames).unwrap_err();
        assert!(err.to_string().contains("resolution changed"), "{err}");
    }

    #[test]
    fn oracle_equivalence_on_small_net() {
        let net = small_net();
        let frames = synth::random_sequence(3, 32, 32, 6, 9);
        let expected: Vec<_> = frames
            .iter()
            .map(|f| argmax_mask(&net.full_forward(f).unwrap().final_scores))
            .collect();
        for s in [
            ClockSchedule::Always,
            ClockSchedule::fixed(1, 1).unwrap(),
            ClockSchedule::adaptive(-1.0).unwrap(),
        ] {
            for p in [SkipPolicy::ReuseFinal, SkipPolicy::FuseCachedDeep] {
                let (masks, traces) = run_sequence(&net, &s, p, &frames).unwrap();
                assert_eq!(masks, expected, "{s} {p:?}");
                assert!(traces.iter().all(|t| t.fired == StageSet::ALL));
            }
        }
    }

    #[test]
    fn prev_score_only_moves_with_stage3() {
        let net = small_net();
        let frames = synth::random_sequence(3, 32, 32, 4, 5);
        let mut runner = ClockworkRunner::new(
            &net,
            ClockSchedule::fixed(1, 2).unwrap(),
            SkipPolicy::default(),
        )
        .unwrap();
        runner.push(&frames[0]).unwrap();
        let p0 = runner.state().unwrap().prev_score().clone();
        runner.push(&frames[1]).unwrap();
        assert_eq!(runner.state().unwrap().prev_score(), &p0);
        assert_ne!(runner.state().unwrap().cached_score_pool4(), &p0);
        runner.push(&frames[2]).unwrap();
        assert_eq!(
            runner.state().unwrap().prev_score(),
            runner.state().unwrap().cached_score_pool4()
        );
    }

    #[test]
    fn replaying_a_prefix_reproduces_state() {
        let net = small_net();
        let frames = synth::random_sequence(3, 32, 32, 5, 8);
        let s = ClockSchedule::adaptive(0.01).unwrap();
        let run = |n: usize| {
            let mut st = None;
            for f in &frames[..n] {
                st = Some(step(&net, &s, SkipPolicy::default(), st, f).unwrap().state);
            }
            st.unwrap()
        };
        assert!(run(3).same_as(&run(3)));
        assert!(!run(3).same_as(&run(4)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn traces_obey_prefix_rule(p2 in 1u64..5, p3 in 1u64..9, theta in -0.1f64..0.3, seed in any::<u64>()) {
            let s = ClockSchedule::fixed(p2, p3).unwrap();
            for i in 0..20 {
                prop_assert!(should_fire(&s, i, None).unwrap().is_prefix_closed());
            }
            let a = ClockSchedule::adaptive(theta).unwrap();
            let mut g = crate::rng::SplitMix64::new(seed);
            for i in 0..20 {
                let c = g.unit_f32() as f64 * 0.3;
                prop_assert!(should_fire(&a, i, Some(c)).unwrap().is_prefix_closed());
            }
        }
    }
}
