use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use cwseg_core::io::{self, Palette, SequenceManifest};
use cwseg_core::metrics::{build_report, ApAccumulator};
use cwseg_core::{ConfusionMatrix, Exec, LabelMask};

use crate::{report, segment, Usage};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding `<stem>.ppm` predictions.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Manifest whose lines carry a ground-truth mask.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Class treated as positive for precision, recall, F1 and AP.
    #[arg(long, default_value_t = 1)]
    pub positive_class: u16,
    /// Directory holding `<stem>.pfm` positive-class score maps for AP.
    #[arg(long)]
    pub scores_dir: Option<PathBuf>,
    /// Class count when the manifest has no palette.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn find_prediction(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["ppm", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

pub fn run(a: EvalArgs) -> Result<()> {
    let manifest = SequenceManifest::read(&a.manifest)?;
    if manifest.is_empty() {
        return Err(anyhow!("manifest {} lists no frames", a.manifest.display()));
    }
    if !manifest.has_truth() {
        return Err(anyhow!(
            "manifest {} has no ground-truth column",
            a.manifest.display()
        ));
    }
    let classes = manifest.palette.as_ref().map_or(a.classes, Palette::len);
    if a.positive_class as usize >= classes {
        return Err(Usage(format!(
            "--positive-class {} out of range for {classes} classes",
            a.positive_class
        ))
        .into());
    }
    let palette = segment::palette_for(&manifest, classes)?;
    let stems = segment::frame_stems(&manifest)?;

    let exec = Exec::default();
    let jobs: Vec<_> = manifest.entries.iter().zip(&stems).collect();
    let pairs: Vec<(LabelMask, LabelMask)> = exec.try_map(&jobs, |(entry, stem)| -> Result<_> {
        let truth_path = entry.truth.as_ref().expect("checked has_truth");
        let truth = io::read_mask(truth_path, &palette)
            .with_context(|| format!("frame {stem}: ground truth {}", truth_path.display()))?;
        let pred_path = find_prediction(&a.pred_dir, stem).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!(
                    "frame {stem}: no prediction {stem}.ppm in {}",
                    a.pred_dir.display()
                ),
            )
        })?;
        let pred = io::read_mask(&pred_path, &palette)
            .with_context(|| format!("frame {stem}: prediction {}", pred_path.display()))?;
        if (truth.height(), truth.width()) != (pred.height(), pred.width()) {
            return Err(anyhow!(
                "frame {stem}: prediction is {}x{} but ground truth is {}x{}",
                pred.width(),
                pred.height(),
                truth.width(),
                truth.height()
            ));
        }
        Ok((truth, pred))
    })?;
    let cm = ConfusionMatrix::from_pairs(classes, &pairs, exec)?;

    let ap = match &a.scores_dir {
        None => None,
        Some(dir) => {
            let mut acc = ApAccumulator::new();
            for ((truth, _), stem) in pairs.iter().zip(&stems) {
                let path = dir.join(format!("{stem}.pfm"));
                let scores =
                    io::read_pfm(&path).with_context(|| format!("frame {stem}: scores"))?;
                acc.push(scores.data(), truth, a.positive_class)
                    .with_context(|| format!("frame {stem}: scores {}", path.display()))?;
            }
            Some(acc)
        }
    };
    let r = build_report(&cm, ap.as_ref(), a.positive_class as usize)?;
    let text = serde_json::to_string_pretty(&report::metrics(&r, pairs.len()))?;
    crate::emit(&text, a.out.as_deref())
}
