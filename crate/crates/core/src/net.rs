//! Three-stage FCN-8s style network at toy scale.
//!
//! ```text
//! stage 1: [conv3x3-relu, conv3x3-relu, pool2] x 3      -> pool3 (stride 8)   -> score_pool3
//! stage 2: [conv3x3-relu, conv3x3-relu, pool2]          -> pool4 (stride 16)  -> score_pool4
//! stage 3: [conv3x3-relu, conv3x3-relu, pool2]          -> pool5 (stride 32)  -> score_fr
//! fusion:  up2(score_fr) + score_pool4 -> up2 -> + score_pool3 -> up8
//! ```
//!
//! Block widths are `base, 2*base, 4*base, 8*base` for the first four blocks.
//! The stage-3 block runs at `classifier_width`, standing in for the wide
//! fully-convolutional classifier layers that dominate an FCN's cost.

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::WeightStore;
use crate::metrics::LabelMask;
use crate::tensor::{self, ConvParams, Tensor};

/// Spatial size of every input frame must be a multiple of this.
pub const NET_STRIDE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageId {
    Stage1,
    Stage2,
    Stage3,
}

impl StageId {
    pub const ALL: [StageId; 3] = [StageId::Stage1, StageId::Stage2, StageId::Stage3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            StageId::Stage1 => "stage1",
            StageId::Stage2 => "stage2",
            StageId::Stage3 => "stage3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub base_width: usize,
    pub classifier_width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::new(3, 2, 8)
    }
}

/// One convolution in the fixed topology.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub stage: StageId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![
            self.out_channels,
            self.in_channels,
            self.kernel,
            self.kernel,
        ]
    }
}

impl NetConfig {
    /// Classifier width defaults to `48 * base_width`.
    pub fn new(in_channels: usize, num_classes: usize, base_width: usize) -> Self {
        NetConfig {
            in_channels,
            num_classes,
            base_width,
            classifier_width: 48 * base_width,
        }
    }

    pub fn with_classifier_width(mut self, width: usize) -> Self {
        self.classifier_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::param("in_channels", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::param("num_classes", "must be at least 2"));
        }
        if self.num_classes > u16::MAX as usize {
            return Err(Error::param("num_classes", "too many classes"));
        }
        if self.base_width == 0 || self.classifier_width == 0 {
            return Err(Error::param("width", "must be positive"));
        }
        Ok(())
    }

    /// Every convolution in execution order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let w = self.base_width;
        let d = self.classifier_width;
        let c = self.num_classes;
        let conv = |name, stage, i, o| LayerSpec {
            name,
            stage,
            in_channels: i,
            out_channels: o,
            kernel: 3,
            pad: 1,
        };
        let head = |name, stage, i| LayerSpec {
            name,
            stage,
            in_channels: i,
            out_channels: c,
            kernel: 1,
            pad: 0,
        };
        use StageId::*;
        vec![
            conv("conv1_1", Stage1, self.in_channels, w),
            conv("conv1_2", Stage1, w, w),
            conv("conv2_1", Stage1, w, 2 * w),
            conv("conv2_2", Stage1, 2 * w, 2 * w),
            conv("conv3_1", Stage1, 2 * w, 4 * w),
            conv("conv3_2", Stage1, 4 * w, 4 * w),
            head("score_pool3", Stage1, 4 * w),
            conv("conv4_1", Stage2, 4 * w, 8 * w),
            conv("conv4_2", Stage2, 8 * w, 8 * w),
            head("score_pool4", Stage2, 8 * w),
            conv("conv5_1", Stage3, 8 * w, d),
            conv("conv5_2", Stage3, d, d),
            head("score_fr", Stage3, d),
        ]
    }

    /// Recovers the configuration a weight store was generated for.
    pub fn infer_from(store: &WeightStore) -> Result<Self> {
        let dims = |layer: &str| -> Result<Vec<usize>> {
            let entry = format!("{layer}.weight");
            store
                .get(&entry)
                .map(|e| e.shape.clone())
                .ok_or(Error::MissingLayer {
                    layer: layer.to_string(),
                    entry,
                })
        };
        let first = dims("conv1_1")?;
        let deep = dims("conv5_1")?;
        let head = dims("score_fr")?;
        if first.len() != 4 || deep.len() != 4 || head.len() != 4 {
            return Err(Error::Contract("weight entries must be rank 4".into()));
        }
        let cfg = NetConfig {
            in_channels: first[1],
            base_width: first[0],
            classifier_width: deep[0],
            num_classes: head[0],
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Convolutions actually executed and their multiply-accumulate count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Work {
    pub convs: u64,
    pub macs: u64,
}

impl Add for Work {
    type Output = Work;
    fn add(self, o: Work) -> Work {
        Work {
            convs: self.convs + o.convs,
            macs: self.macs + o.macs,
        }
    }
}

impl AddAssign for Work {
    fn add_assign(&mut self, o: Work) {
        *self = *self + o;
    }
}

#[derive(Clone, Debug)]
pub struct Stage1Output {
    pub pool3_features: Tensor,
    pub score_pool3: Tensor,
    pub work: Work,
}

#[derive(Clone, Debug)]
pub struct Stage2Output {
    pub pool4_features: Tensor,
    pub score_pool4: Tensor,
    pub work: Work,
}

#[derive(Clone, Debug)]
pub struct Stage3Output {
    pub score_fr: Tensor,
    pub work: Work,
}

#[derive(Clone, Debug)]
pub struct StageOutputs {
    pub pool3_features: Tensor,
    pub score_pool3: Tensor,
    pub pool4_features: Tensor,
    pub score_pool4: Tensor,
    pub score_fr: Option<Tensor>,
    pub final_scores: Tensor,
    /// Indexed by [`StageId::index`].
    pub work: [Work; 3],
}

#[derive(Clone, Debug)]
pub struct StagedNet {
    cfg: NetConfig,
    specs: Vec<LayerSpec>,
    params: Vec<ConvParams>,
    exec: Exec,
}

pub fn build_net(cfg: NetConfig, weights: &WeightStore) -> Result<StagedNet> {
    StagedNet::new(cfg, weights)
}

impl StagedNet {
    pub fn new(cfg: NetConfig, weights: &WeightStore) -> Result<Self> {
        cfg.validate()?;
        let specs = cfg.layers();
        let mut params = Vec::with_capacity(specs.len());
        for spec in &specs {
            let w = lookup(weights, spec.name, "weight", &spec.weight_shape())?;
            let b = lookup(weights, spec.name, "bias", &[spec.out_channels])?;
            params.push(ConvParams::new(
                spec.out_channels,
                spec.in_channels,
                spec.kernel,
                spec.kernel,
                1,
                spec.pad,
                w.to_vec(),
                b.to_vec(),
            )?);
        }
        Ok(StagedNet {
            cfg,
            specs,
            params,
            exec: Exec::default(),
        })
    }

    /// Same network, different execution strategy for the kernels.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layer_count(&self) -> usize {
        self.specs.len()
    }

    fn conv(&self, name: &str, x: &Tensor, relu: bool, work: &mut Work) -> Result<Tensor> {
        let i = self
            .specs
            .iter()
            .position(|s| s.name == name)
            .expect("layer in fixed topology");
        let p = &self.params[i];
        let mut y = tensor::conv2d_with(x, p, self.exec)?;
        let (kh, kw) = p.kernel();
        work.convs += 1;
        work.macs += (y.len() * p.in_channels() * kh * kw) as u64;
        if relu {
            tensor::relu_in_place(&mut y);
        }
        Ok(y)
    }

    fn block(&self, names: [&str; 2], x: &Tensor, work: &mut Work) -> Result<Tensor> {
        let a = self.conv(names[0], x, true, work)?;
        let b = self.conv(names[1], &a, true, work)?;
        tensor::maxpool2d(&b, 2, 2)
    }

    pub fn check_frame(&self, frame: &Tensor) -> Result<()> {
        if frame.channels() != self.cfg.in_channels {
            return Err(Error::shape(
                "frame channels",
                self.cfg.in_channels,
                frame.channels(),
            ));
        }
        if !frame.height().is_multiple_of(NET_STRIDE) || !frame.width().is_multiple_of(NET_STRIDE) {
            return Err(Error::shape(
                "frame size",
                format!("multiples of {NET_STRIDE}"),
                format!("{}x{}", frame.height(), frame.width()),
            ));
        }
        Ok(())
    }

    pub fn run_stage1(&self, frame: &Tensor) -> Result<Stage1Output> {
        self.check_frame(frame)?;
        let mut work = Work::default();
        let x = self.block(["conv1_1", "conv1_2"], frame, &mut work)?;
        let x = self.block(["conv2_1", "conv2_2"], &x, &mut work)?;
        let pool3 = self.block(["conv3_1", "conv3_2"], &x, &mut work)?;
        let score_pool3 = self.conv("score_pool3", &pool3, false, &mut work)?;
        Ok(Stage1Output {
            pool3_features: pool3,
            score_pool3,
            work,
        })
    }

    pub fn run_stage2(&self, pool3_features: &Tensor) -> Result<Stage2Output> {
        let mut work = Work::default();
        let pool4 = self.block(["conv4_1", "conv4_2"], pool3_features, &mut work)?;
        let score_pool4 = self.conv("score_pool4", &pool4, false, &mut work)?;
        Ok(Stage2Output {
            pool4_features: pool4,
            score_pool4,
            work,
        })
    }

    pub fn run_stage3(&self, pool4_features: &Tensor) -> Result<Stage3Output> {
        let mut work = Work::default();
        let pool5 = self.block(["conv5_1", "conv5_2"], pool4_features, &mut work)?;
        let score_fr = self.conv("score_fr", &pool5, false, &mut work)?;
        Ok(Stage3Output { score_fr, work })
    }

    /// FCN-8s fusion. Skip scores are center-cropped to the upsampled map
    /// before being added.
    pub fn fuse_and_upsample(
        &self,
        score_fr: &Tensor,
        score_pool4: &Tensor,
        score_pool3: &Tensor,
    ) -> Result<Tensor> {
        let c = self.cfg.num_classes;
        for (name, t) in [
            ("score_fr", score_fr),
            ("score_pool4", score_pool4),
            ("score_pool3", score_pool3),
        ] {
            if t.channels() != c {
                return Err(Error::shape(
                    format!("fusion {name} channels"),
                    c,
                    t.channels(),
                ));
            }
        }
        let up = tensor::upsample_bilinear_with(score_fr, 2, self.exec)?;
        let skip = crop_to(score_pool4, &up, "score_pool4")?;
        let fused = tensor::add(&up, &skip)?;
        let up = tensor::upsample_bilinear_with(&fused, 2, self.exec)?;
        let skip = crop_to(score_pool3, &up, "score_pool3")?;
        let fused = tensor::add(&up, &skip)?;
        tensor::upsample_bilinear_with(&fused, 8, self.exec)
    }

    pub fn full_forward(&self, frame: &Tensor) -> Result<StageOutputs> {
        let s1 = self.run_stage1(frame)?;
        let s2 = self.run_stage2(&s1.pool3_features)?;
        let s3 = self.run_stage3(&s2.pool4_features)?;
        let final_scores =
            self.fuse_and_upsample(&s3.score_fr, &s2.score_pool4, &s1.score_pool3)?;
        Ok(StageOutputs {
            pool3_features: s1.pool3_features,
            score_pool3: s1.score_pool3,
            pool4_features: s2.pool4_features,
            score_pool4: s2.score_pool4,
            score_fr: Some(s3.score_fr),
            final_scores,
            work: [s1.work, s2.work, s3.work],
        })
    }
}

fn crop_to(skip: &Tensor, target: &Tensor, name: &'static str) -> Result<Tensor> {
    if skip.height() < target.height() || skip.width() < target.width() {
        return Err(Error::shape(
            format!("fusion alignment of {name}"),
            format!("at least {}x{}", target.height(), target.width()),
            format!("{}x{}", skip.height(), skip.width()),
        ));
    }
    tensor::crop_center(skip, target.height(), target.width())
}

fn lookup<'a>(
    store: &'a WeightStore,
    layer: &str,
    part: &str,
    expected: &[usize],
) -> Result<&'a [f32]> {
    let entry = format!("{layer}.{part}");
    let e = store.get(&entry).ok_or_else(|| Error::MissingLayer {
        layer: layer.to_string(),
        entry: entry.clone(),
    })?;
    if e.shape != expected {
        return Err(Error::LayerShape {
            layer: entry,
            expected: expected.to_vec(),
            actual: e.shape.clone(),
        });
    }
    Ok(&e.data)
}

/// Per-pixel index of the highest score; ties go to the lowest class index.
pub fn argmax_mask(final_scores: &Tensor) -> LabelMask {
    let (c, h, w) = (
        final_scores.channels(),
        final_scores.height(),
        final_scores.width(),
    );
    let hw = h * w;
    let data = final_scores.data();
    let labels = (0..hw)
        .map(|i| {
            let mut best = 0usize;
            let mut best_v = data[i];
            for k in 1..c {
                let v = data[k * hw + i];
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            best as u16
        })
        .collect();
    LabelMask::new(h, w, labels).expect("label count matches pixels")
}
