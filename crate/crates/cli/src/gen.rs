use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use cwseg_core::io::{self, Palette, SequenceEntry, SequenceManifest};
use cwseg_core::net::argmax_mask;
use cwseg_core::{synth, NetConfig};

use crate::segment;

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub base_width: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub in_channels: usize,
    /// Width of the deepest blocks. Defaults to 48 x base width.
    #[arg(long)]
    pub classifier_width: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_gen_weights(a: GenWeightsArgs) -> Result<()> {
    let mut cfg = NetConfig::new(a.in_channels, a.classes, a.base_width);
    if let Some(w) = a.classifier_width {
        cfg = cfg.with_classifier_width(w);
    }
    cfg.validate()?;
    io::write_weights(&io::gen_weights(&cfg, a.seed)?, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives frames/, gt/ and sequence.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value_t = 8)]
    pub per_scene: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Label each frame with full inference under these weights and list
    /// the masks as ground truth.
    #[arg(long)]
    pub truth_weights: Option<PathBuf>,
}

pub fn run_synth(a: SynthArgs) -> Result<()> {
    let frames = synth::static_scenes(a.channels, a.height, a.width, a.scenes, a.per_scene, a.seed);
    let net = a
        .truth_weights
        .as_deref()
        .map(segment::load_net)
        .transpose()?;
    let frames_dir = a.out.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .with_context(|| format!("creating {}", frames_dir.display()))?;
    let gt_dir = a.out.join("gt");
    if net.is_some() {
        std::fs::create_dir_all(&gt_dir)
            .with_context(|| format!("creating {}", gt_dir.display()))?;
    }
    let palette = net
        .as_ref()
        .map(|n| Palette::default_for(n.config().num_classes));

    let mut manifest = SequenceManifest {
        entries: Vec::with_capacity(frames.len()),
        palette: palette.clone(),
    };
    for (i, frame) in frames.iter().enumerate() {
        let name = format!("{i:05}");
        io::write_image(frame, frames_dir.join(format!("{name}.ppm")))?;
        let truth = match (&net, &palette) {
            (Some(n), Some(p)) => {
                let mask = argmax_mask(&n.full_forward(frame)?.final_scores);
                io::write_mask(&mask, p, gt_dir.join(format!("{name}.ppm")))?;
                Some(PathBuf::from(format!("gt/{name}.ppm")))
            }
            _ => None,
        };
        manifest.entries.push(SequenceEntry {
            frame: PathBuf::from(format!("frames/{name}.ppm")),
            truth,
        });
    }
    let path = a.out.join("sequence.txt");
    std::fs::write(&path, manifest.to_text())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
