use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::Args;
use cwseg_core::io::{self, SequenceManifest};
use cwseg_core::{bench, synth, NetConfig, StagedNet};

use crate::{report, segment, ScheduleArgs};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Frames to time. Without it a synthetic static-scene sequence is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Weight store. Without it weights are generated from --seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Timed passes per mode; the best pass is reported.
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value_t = 8)]
    pub per_scene: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: BenchArgs) -> Result<()> {
    let schedule = a.schedule.schedule()?;
    let net = match &a.weights {
        Some(p) => segment::load_net(p)?,
        None => {
            let cfg = NetConfig::default();
            StagedNet::new(cfg, &io::gen_weights(&cfg, a.seed)?)?
        }
    };
    let frames = match &a.manifest {
        Some(p) => {
            let m = SequenceManifest::read(p)?;
            m.entries
                .iter()
                .map(|e| io::read_image(&e.frame))
                .collect::<cwseg_core::Result<Vec<_>>>()?
        }
        None => synth::static_scenes(
            net.config().in_channels,
            a.height,
            a.width,
            a.scenes,
            a.per_scene,
            a.seed.wrapping_add(1),
        ),
    };
    if frames.is_empty() {
        return Err(anyhow!("no frames to benchmark"));
    }
    let r = bench::compare(
        &net,
        &frames,
        &schedule,
        a.schedule.skip_policy.into(),
        a.repeat,
    )?;
    let text = serde_json::to_string_pretty(&report::bench(&r))?;
    crate::emit(&text, a.out.as_deref())
}
