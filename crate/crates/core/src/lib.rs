//! Staged fully-convolutional segmentation with clockwork scheduling of the
//! deep stages.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds the deterministic kernels (conv, pool, upsample, ...).
//! * [`net`] builds the three-stage FCN-8s style network on top of them.
//! * [`clockwork`] decides per frame which stages run and persists deep
//!   scores across frames.
//! * [`metrics`] implements the segmentation evaluation suite.
//! * [`io`] owns the on-disk formats (PPM/PGM/PFM, masks, weights, manifests).
//! * [`bench`] compares full per-frame inference with a clockwork schedule.
//!
//! With the `parallel` feature (default) the data-parallel inner loops run on
//! rayon; without it every [`Exec`] falls back to sequential execution.
//! Both paths produce bit-identical results.

pub mod bench;
pub mod clockwork;
mod error;
pub mod exec;
pub mod io;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use clockwork::{
    run_sequence, should_fire, step, ClockSchedule, ClockworkRunner, PersistedState, SkipPolicy,
    StageSet, StageTrace, StepOutput,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use metrics::{ConfusionMatrix, LabelMask, MetricsReport};
pub use net::{NetConfig, StageId, StageOutputs, StagedNet, Work};
pub use tensor::{ConvParams, Tensor};
