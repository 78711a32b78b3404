#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use lpnet::model::build_model;
use lpnet::tensor::Tensor;
use lpnet::{Model, ModelConfig, PoolExponent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-4)`: magnitudes below the floor are compared absolutely.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

pub fn small_config(p: PoolExponent, multi_stage: bool) -> ModelConfig {
    ModelConfig {
        pooling_p: p,
        multi_stage,
        input_channels: 3,
        input_size: 14,
        stage1_features: 2,
        stage2_features: 3,
        hidden_units: 4,
        conv1_kernel: 3,
        conv2_kernel: 3,
        norm_kernel: 3,
        ..ModelConfig::default()
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest relative error between backprop and five-point central
/// differences over every parameter of the model. The wider stencil keeps
/// truncation error negligible at large pooling exponents.
pub fn model_grad_error(model: &Model, input: &Tensor, target: usize) -> f64 {
    let (_, grads) = model.energy_and_grads(input, target).unwrap();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.tensors.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.params()[k].data()[i];
            let mut at = |d: f64| {
                probe.params_mut()[k].data_mut()[i] = orig + d;
                probe.forward(input, Some(target)).unwrap().energy.unwrap()
            };
            let numeric = (at(-2.0 * STEP) - 8.0 * at(-STEP) + 8.0 * at(STEP) - at(2.0 * STEP)) / (12.0 * STEP);
            probe.params_mut()[k].data_mut()[i] = orig;
            worst = worst.max(rel_error(g.data()[i], numeric));
        }
    }
    worst
}

pub fn build(config: &ModelConfig, seed: u64) -> Model {
    build_model(config, seed).unwrap()
}

/// Gray 8-bit images whose class is the position of a bright square on a
/// noisy background, stored as one channel.
pub fn synthetic_images(n: usize, size: usize, seed: u64) -> lpnet::data::LabeledImages {
    let mut r = rng(seed);
    let mut px = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    let cell = size / 4;
    for i in 0..n {
        let label = (i % 10) as u8;
        let (cy, cx) = (1 + (label as usize / 4), label as usize % 4);
        for y in 0..size {
            for x in 0..size {
                let on = y / cell == cy && x / cell == cx;
                let base: i32 = if on { 200 } else { 40 };
                px.push((base + r.gen_range(-30..30)).clamp(0, 255) as u8);
            }
        }
        labels.push(label);
    }
    lpnet::data::LabeledImages::new([n, 1, size, size], lpnet::data::Pixels::U8(px), labels).unwrap()
}
