//! Fixed inputs shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqseg_core::nn::Tensor;
use sqseg_core::synth::{random_label_map, scene_image};
use sqseg_core::LabelMask;

/// A reproducible multi-class scene of the given size.
pub fn scene(size: usize, seed: u64) -> (LabelMask, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_label_map(size, size, 5, 8, &mut rng);
    let image = scene_image(&labels, &mut rng);
    (labels, image)
}

/// Deterministic pseudo-random tensor in `[-1, 1)`.
pub fn noise(shape: &[usize], seed: u64) -> Tensor {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    Tensor::from_fn(shape, |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    })
}
