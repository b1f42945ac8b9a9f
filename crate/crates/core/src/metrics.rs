//! Segmentation evaluation.
//!
//! Everything except average precision is derived from a [`ConfusionMatrix`]
//! whose rows are ground truth and columns are predictions. All values are
//! fractions in `[0, 1]`; converting to percent is left to the presentation
//! layer.

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Per-pixel class indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(
                "label mask length",
                height * width,
                labels.len(),
            ));
        }
        Ok(LabelMask {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u16) -> Self {
        LabelMask {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Fails on the first label `>= num_classes`.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l as usize >= num_classes) {
            Some(index) => Err(Error::LabelRange {
                label: self.labels[index],
                index,
                num_classes,
            }),
            None => Ok(()),
        }
    }

    fn check_same_size(&self, other: &LabelMask) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                "mask pair",
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

/// `counts[t * n + p]` = pixels with truth `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        assert!(num_classes > 0, "confusion matrix needs at least one class");
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Row-major `n x n` counts.
    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if num_classes == 0 || counts.len() != num_classes * num_classes {
            return Err(Error::shape(
                "confusion counts",
                num_classes * num_classes,
                counts.len(),
            ));
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        let n = self.num_classes;
        self.counts[class * n..(class + 1) * n].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, class)).sum()
    }

    pub fn accumulate(&mut self, truth: &LabelMask, pred: &LabelMask) -> Result<()> {
        truth.check_same_size(pred)?;
        truth.check_classes(self.num_classes)?;
        pred.check_classes(self.num_classes)?;
        let n = self.num_classes;
        for (&t, &p) in truth.labels.iter().zip(&pred.labels) {
            self.counts[t as usize * n + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise sum. Merging is associative and commutative.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::shape(
                "confusion merge classes",
                self.num_classes,
                other.num_classes,
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Accumulates `(truth, pred)` pairs, one shard per pair, then merges.
    pub fn from_pairs(
        num_classes: usize,
        pairs: &[(LabelMask, LabelMask)],
        exec: Exec,
    ) -> Result<Self> {
        let shards = exec.try_map(pairs, |(t, p)| {
            let mut cm = ConfusionMatrix::new(num_classes);
            cm.accumulate(t, p)?;
            Ok::<_, Error>(cm)
        })?;
        let mut cm = ConfusionMatrix::new(num_classes);
        for s in &shards {
            cm.merge(s)?;
        }
        Ok(cm)
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.num_classes).map(|i| self.get(i, i)).sum();
        diag as f64 / total as f64
    }

    /// Mean of per-class recall over classes present in the ground truth.
    pub fn mean_class_accuracy(&self) -> f64 {
        let accs: Vec<f64> = (0..self.num_classes)
            .filter_map(|i| {
                let row = self.row_sum(i);
                (row > 0).then(|| self.get(i, i) as f64 / row as f64)
            })
            .collect();
        mean(&accs)
    }

    /// `TP / (TP + FP + FN)` per class, `None` for classes absent from both
    /// truth and prediction.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|i| {
                let tp = self.get(i, i);
                let union = self.row_sum(i) + self.col_sum(i) - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn mean_iou(&self) -> f64 {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        mean(&ious)
    }

    /// `sum_i (row_i / total) * IU_i`.
    pub fn freq_weighted_iou(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.per_class_iou()
            .into_iter()
            .enumerate()
            .map(|(i, iu)| self.row_sum(i) as f64 / total as f64 * iu.unwrap_or(0.0))
            .sum()
    }

    /// One-vs-rest statistics for `positive_class`.
    pub fn binary_stats(&self, positive_class: usize) -> Result<BinaryStats> {
        if positive_class >= self.num_classes {
            return Err(Error::param(
                "positive_class",
                format!("{positive_class} >= {} classes", self.num_classes),
            ));
        }
        let tp = self.get(positive_class, positive_class);
        let fp = self.col_sum(positive_class) - tp;
        let fn_ = self.row_sum(positive_class) - tp;
        let tn = self.total() - tp - fp - fn_;
        Ok(BinaryStats::from_counts(tp, fp, fn_, tn))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn accumulate(
    cm: &ConfusionMatrix,
    truth: &LabelMask,
    pred: &LabelMask,
) -> Result<ConfusionMatrix> {
    let mut out = cm.clone();
    out.accumulate(truth, pred)?;
    Ok(out)
}

pub fn pixel_accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.pixel_accuracy()
}

pub fn mean_class_accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.mean_class_accuracy()
}

pub fn mean_iou(cm: &ConfusionMatrix) -> f64 {
    cm.mean_iou()
}

pub fn freq_weighted_iou(cm: &ConfusionMatrix) -> f64 {
    cm.freq_weighted_iou()
}

pub fn binary_stats(cm: &ConfusionMatrix, positive_class: usize) -> Result<BinaryStats> {
    cm.binary_stats(positive_class)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// Set when any ratio had an empty denominator and was reported as 0.
    pub undefined: bool,
}

impl BinaryStats {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let mut undefined = false;
        let mut ratio = |num: u64, den: u64| {
            if den == 0 {
                undefined = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let fpr = ratio(fp, fp + tn);
        let fnr = ratio(fn_, fn_ + tp);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined = true;
            0.0
        };
        BinaryStats {
            precision,
            recall,
            f1,
            fpr,
            fnr,
            undefined,
        }
    }
}

/// Collects `(score, is_positive)` samples across frames for average
/// precision.
#[derive(Clone, Debug, Default)]
pub struct ApAccumulator {
    samples: Vec<(f32, bool)>,
}

impl ApAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, scores: &[f32], truth: &LabelMask, positive_class: u16) -> Result<()> {
        if scores.len() != truth.labels.len() {
            return Err(Error::shape(
                "score map vs truth",
                truth.labels.len(),
                scores.len(),
            ));
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        self.samples.extend(
            scores
                .iter()
                .zip(&truth.labels)
                .map(|(&s, &l)| (s, l == positive_class)),
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// 11-point interpolated AP. Thresholds sweep every distinct score; a
    /// pixel is predicted positive when its score is at or above the
    /// threshold. At recall level `k/10` the precision is the best precision
    /// reached at any threshold whose recall is at least `k/10`.
    pub fn average_precision(&self) -> Result<f64> {
        let npos = self.samples.iter().filter(|s| s.1).count() as u64;
        if npos == 0 {
            return Err(Error::NoPositives);
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        // (tp, fp) after each distinct threshold
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut i = 0;
        while i < sorted.len() {
            let s = sorted[i].0;
            while i < sorted.len() && sorted[i].0 == s {
                if sorted[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push((tp, fp));
        }
        Ok(eleven_point(&points, npos))
    }
}

/// Shared by the sweep and by tests' exhaustive oracle: 11-point
/// interpolation over `(tp, fp)` operating points. Recall levels are compared
/// in integers (`10 * tp >= k * npos`) so that `k/10` is exact.
pub fn eleven_point(points: &[(u64, u64)], npos: u64) -> f64 {
    let mut sum = 0.0;
    for k in 0..=10u64 {
        let best = points
            .iter()
            .filter(|(tp, _)| 10 * tp >= k * npos)
            .map(|&(tp, fp)| {
                if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                }
            })
            .fold(0.0f64, f64::max);
        sum += best;
    }
    sum / 11.0
}

pub fn average_precision(scores: &[f32], truth: &LabelMask, positive_class: u16) -> Result<f64> {
    let mut acc = ApAccumulator::new();
    acc.push(scores, truth, positive_class)?;
    acc.average_precision()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub cl_acc: f64,
    pub miu: f64,
    pub fwiu: f64,
    pub per_class_iu: Vec<Option<f64>>,
    pub positive_class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub binary_undefined: bool,
    /// `None` when no scores were supplied or the truth has no positives.
    pub average_precision: Option<f64>,
    pub pixels: u64,
}

pub fn build_report(
    cm: &ConfusionMatrix,
    scores: Option<&ApAccumulator>,
    positive_class: usize,
) -> Result<MetricsReport> {
    let b = cm.binary_stats(positive_class)?;
    let average_precision = match scores.map(ApAccumulator::average_precision) {
        None | Some(Err(Error::NoPositives)) => None,
        Some(Ok(ap)) => Some(ap),
        Some(Err(e)) => return Err(e),
    };
    Ok(MetricsReport {
        acc: cm.pixel_accuracy(),
        cl_acc: cm.mean_class_accuracy(),
        miu: cm.mean_iou(),
        fwiu: cm.freq_weighted_iou(),
        per_class_iu: cm.per_class_iou(),
        positive_class,
        precision: b.precision,
        recall: b.recall,
        f1: b.f1,
        fpr: b.fpr,
        fnr: b.fnr,
        binary_undefined: b.undefined,
        average_precision,
        pixels: cm.total(),
    })
}
