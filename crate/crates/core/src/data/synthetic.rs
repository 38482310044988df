//! Synthetic labelled images in CIFAR geometry, for smoke runs and tests when
//! the real dataset is not at hand.
//!
//! Class `c` of `k` is a sinusoidal grating at orientation `pi * c / k` (with a
//! small jitter), random spatial frequency, phase, contrast and per-channel
//! tint, plus uniform pixel noise. Pixels are snapped to multiples of 1/255 so
//! a dataset survives the binary record format unchanged.

use std::f32::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{invalid, Result};
use crate::nn::seeded_rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    /// Half-width of the uniform pixel noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 100,
            side: 32,
            noise: 0.15,
            seed: 0,
        }
    }
}

/// Labels cycle through the classes, so any prefix is close to balanced.
pub fn synthetic_dataset(spec: SyntheticSpec, split: Split) -> Result<Dataset> {
    if spec.classes == 0 || spec.classes > 10 || spec.per_class == 0 || spec.side == 0 {
        return Err(invalid(format!("unusable synthetic dataset spec {spec:?}")));
    }
    let mut rng = seeded_rng(spec.seed ^ if split == Split::Test { 0x7e57 } else { 0 });
    let n = spec.classes * spec.per_class;
    let side = spec.side;
    let plane = side * side;
    let mut data = Vec::with_capacity(n * 3 * plane);
    let mut labels = Vec::with_capacity(n);
    let spacing = PI / spec.classes as f32;
    for i in 0..n {
        let c = i % spec.classes;
        labels.push(c as u8);
        let theta = spacing * c as f32 + rng.random_range(-0.25..=0.25) * spacing;
        let freq = rng.random_range(1.5f32..=3.5);
        let phase = rng.random_range(0.0..2.0 * PI);
        let contrast = rng.random_range(0.2f32..=0.4);
        let tint: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.5f32..=1.0));
        let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.35f32..=0.65));
        let (s, co) = theta.sin_cos();
        for ch in 0..3 {
            for p in 0..plane {
                let (y, x) = ((p / side) as f32, (p % side) as f32);
                let wave = (2.0 * PI * freq * (x * co + y * s) / side as f32 + phase).sin();
                let noise = if spec.noise > 0.0 {
                    rng.random_range(-spec.noise..=spec.noise)
                } else {
                    0.0
                };
                let v = (base[ch] + contrast * tint[ch] * wave + noise).clamp(0.0, 1.0);
                data.push((v * 255.0).round() / 255.0);
            }
        }
    }
    Dataset::new(Tensor::new(&[n, 3, side, side], data)?, labels, split)
}
