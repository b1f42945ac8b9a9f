//! Seeded synthetic frames. Pixel values are multiples of 1/255, so every
//! frame survives a PPM/PGM round trip bit-exactly.

use crate::rng::SplitMix64;
use crate::tensor::Tensor;

fn quantized(g: &mut SplitMix64) -> f32 {
    g.below(256) as f32 / 255.0
}

pub fn random_frame(channels: usize, height: usize, width: usize, seed: u64) -> Tensor {
    let mut g = SplitMix64::new(seed);
    Tensor::from_fn(channels, height, width, |_, _, _| quantized(&mut g)).expect("finite")
}

/// `len` independent random frames.
pub fn random_sequence(
    channels: usize,
    height: usize,
    width: usize,
    len: usize,
    seed: u64,
) -> Vec<Tensor> {
    let mut g = SplitMix64::new(seed);
    (0..len)
        .map(|_| random_frame(channels, height, width, g.next_u64()))
        .collect()
}

/// `scenes` random frames, each repeated `per_scene` times.
pub fn static_scenes(
    channels: usize,
    height: usize,
    width: usize,
    scenes: usize,
    per_scene: usize,
    seed: u64,
) -> Vec<Tensor> {
    random_sequence(channels, height, width, scenes, seed)
        .into_iter()
        .flat_map(|f| std::iter::repeat_n(f, per_scene))
        .collect()
}

/// A base frame where each subsequent frame re-randomizes a further
/// `step` fraction of pixels, so drift accumulates over time.
pub fn drifting_sequence(
    channels: usize,
    height: usize,
    width: usize,
    len: usize,
    step: f32,
    seed: u64,
) -> Vec<Tensor> {
    let mut g = SplitMix64::new(seed);
    let mut cur = random_frame(channels, height, width, g.next_u64()).into_data();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(Tensor::new(channels, height, width, cur.clone()).expect("finite"));
        for v in &mut cur {
            if g.unit_f32() < step {
                *v = quantized(&mut g);
            }
        }
    }
    out
}
