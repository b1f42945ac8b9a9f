use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use cwseg_core::io::{self, Palette, SequenceManifest};
use cwseg_core::{ClockworkRunner, NetConfig, StagedNet, Tensor};

use crate::{report, ScheduleArgs, Usage};

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Sequence manifest listing frame images in order.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Weight store written by `gen-weights` or a converter.
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Output directory for masks and trace.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the softmax probability of this class as `<stem>.pfm`.
    #[arg(long)]
    pub scores_class: Option<u16>,
}

pub fn load_net(weights: &Path) -> Result<StagedNet> {
    let store = io::read_weights(weights)?;
    let cfg = NetConfig::infer_from(&store)?;
    Ok(StagedNet::new(cfg, &store)?)
}

/// Manifest palette when present, otherwise the default for `classes`.
pub fn palette_for(manifest: &SequenceManifest, classes: usize) -> Result<Palette> {
    match &manifest.palette {
        Some(p) if p.len() != classes => Err(anyhow!(
            "manifest palette has {} colors but the model predicts {} classes",
            p.len(),
            classes
        )),
        Some(p) => Ok(p.clone()),
        None => Ok(Palette::default_for(classes)),
    }
}

/// File stems of every frame, rejecting duplicates so outputs cannot collide.
pub fn frame_stems(manifest: &SequenceManifest) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut stems = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let stem = e
            .frame
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("frame path {} has no usable file name", e.frame.display()))?
            .to_string();
        if !seen.insert(stem.clone()) {
            return Err(anyhow!("two frames share the file stem {stem:?}"));
        }
        stems.push(stem);
    }
    Ok(stems)
}

/// Per-pixel softmax probability of `class`.
pub fn class_probability(scores: &Tensor, class: usize) -> cwseg_core::Result<Tensor> {
    let (c, h, w) = (scores.channels(), scores.height(), scores.width());
    Tensor::from_fn(1, h, w, |_, y, x| {
        let max = (0..c)
            .map(|k| scores.get(k, y, x))
            .fold(f32::NEG_INFINITY, f32::max) as f64;
        let denom: f64 = (0..c)
            .map(|k| (scores.get(k, y, x) as f64 - max).exp())
            .sum();
        ((scores.get(class, y, x) as f64 - max).exp() / denom) as f32
    })
}

pub fn run(a: SegmentArgs) -> Result<()> {
    let schedule = a.schedule.schedule()?;
    let net = load_net(&a.weights)?;
    let classes = net.config().num_classes;
    if let Some(k) = a.scores_class {
        if k as usize >= classes {
            return Err(Usage(format!(
                "--scores-class {k} out of range for {classes} classes"
            ))
            .into());
        }
    }
    let manifest = SequenceManifest::read(&a.manifest)?;
    if manifest.is_empty() {
        return Err(anyhow!("manifest {} lists no frames", a.manifest.display()));
    }
    let palette = palette_for(&manifest, classes)?;
    let stems = frame_stems(&manifest)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let trace_path = a.out.join("trace.jsonl");
    let mut trace = BufWriter::new(
        File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?,
    );

    let mut runner = ClockworkRunner::new(&net, schedule, a.schedule.skip_policy.into())?;
    for (entry, stem) in manifest.entries.iter().zip(&stems) {
        let frame = io::read_image(&entry.frame)?;
        let r = runner
            .push(&frame)
            .with_context(|| format!("frame {}", entry.frame.display()))?;
        io::write_mask(&r.mask, &palette, a.out.join(format!("{stem}.ppm")))?;
        if let Some(k) = a.scores_class {
            let p = class_probability(&r.final_scores, k as usize)?;
            io::write_pfm(&p, a.out.join(format!("{stem}.pfm")))?;
        }
        writeln!(trace, "{}", report::trace_line(&r.trace))
            .with_context(|| format!("writing {}", trace_path.display()))?;
    }
    trace
        .flush()
        .with_context(|| format!("writing {}", trace_path.display()))?;
    Ok(())
}
