//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the engine's kernels: convolutions are written as
//! plain loop nests and gradients come from central finite differences.

#![allow(dead_code)]

use factorizenet::nn::{Layer, NamedLayer, Network};
use factorizenet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Direct grouped cross-correlation over an `[N, C, H, W]` input.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    (n, c_in, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
    k: usize,
    groups: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let cin_g = c_in / groups;
    let cout_g = c_out / groups;
    let mut out = vec![0.0; n * c_out * oh * ow];
    for s in 0..n {
        for o in 0..c_out {
            let g = o / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o];
                    for ci in 0..cin_g {
                        let c = g * cin_g + ci;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((s * c_in + c) * h + iy as usize) * w + ix as usize];
                                let wv = weight[((o * cin_g + ci) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((s * c_out + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Multiply-accumulates of one sample through a grouped conv, counted one by
/// one over the full loop nest (zero-padding taps included).
pub fn count_conv_macs(c_in: usize, h: usize, w: usize, c_out: usize, k: usize, groups: usize, stride: usize, pad: usize) -> u64 {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let cin_g = c_in / groups;
    let mut count = 0u64;
    for _o in 0..c_out {
        for _oy in 0..oh {
            for _ox in 0..ow {
                for _ci in 0..cin_g {
                    for _ky in 0..k {
                        for _kx in 0..k {
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    count
}

/// Central finite differences of `f` with respect to every entry of `point`.
pub fn central_diff(point: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let plus = f(&p);
            p[i] = orig - h;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Directional finite differences: for every entry of `point`, the central
/// difference of the vector-valued `f` projected onto `dir`. Differencing the
/// outputs before projecting keeps untouched outputs exactly cancelled.
pub fn central_diff_projected(point: &[f64], h: f64, dir: &[f64], mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let plus = f(&p);
            p[i] = orig - h;
            let minus = f(&p);
            p[i] = orig;
            assert_eq!(plus.len(), dir.len());
            plus.iter()
                .zip(&minus)
                .zip(dir)
                .map(|((a, b), d)| (a - b) * d)
                .sum::<f64>()
                / (2.0 * h)
        })
        .collect()
}

/// Worst relative error over entries where either gradient exceeds `floor`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() > floor || n.abs() > floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-channel (min, max) by flattening the tensor and scanning every index.
pub fn scan_channel_ranges(data: &[f64], shape: &[usize], axis: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); shape[axis]];
    let inner: usize = shape[axis + 1..].iter().product();
    for (i, &v) in data.iter().enumerate() {
        let c = (i / inner) % shape[axis];
        out[c].0 = out[c].0.min(v);
        out[c].1 = out[c].1.max(v);
    }
    out
}

/// Percentile by full sort with linear interpolation at rank p/100*(n-1).
pub fn sorted_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Gives every batchnorm of `net` random, non-trivial statistics.
pub fn randomize_batchnorm<T: factorizenet::Scalar>(net: &mut factorizenet::nn::Network<T>, rng: &mut ChaCha8Rng) {
    for l in &mut net.layers {
        if let factorizenet::nn::Layer::BatchNorm(b) = &mut l.layer {
            let c = b.channels();
            b.gamma = Tensor::from_fn(&[c], |_| T::lit(rng.random_range(0.5..1.5)));
            b.beta = Tensor::from_fn(&[c], |_| T::lit(rng.random_range(-0.3..0.3)));
            b.running_mean = Tensor::from_fn(&[c], |_| T::lit(rng.random_range(-0.2..0.2)));
            b.running_var = Tensor::from_fn(&[c], |_| T::lit(rng.random_range(0.3..2.0)));
        }
    }
}

pub fn tiny_cfg() -> factorizenet::arch::MacroArchConfig {
    factorizenet::arch::MacroArchConfig {
        input_shape: [3, 8, 8],
        stem_channels: 4,
        stage_widths: vec![4, 8],
        blocks_per_stage: 1,
        dense_widths: vec![6, 3],
    }
}

pub fn desk_cfg() -> factorizenet::arch::MacroArchConfig {
    factorizenet::arch::MacroArchConfig {
        input_shape: [3, 16, 16],
        stem_channels: 16,
        stage_widths: vec![16, 32],
        blocks_per_stage: 1,
        dense_widths: vec![64, 2],
    }
}

/// Copy of `net` with every Conv+BN pair replaced by the folded convolution.
pub fn folded_network<T: factorizenet::Scalar>(net: &Network<T>) -> Network<T> {
    let mut layers = Vec::new();
    let mut i = 0;
    while i < net.layers.len() {
        let l = &net.layers[i];
        match (&l.layer, net.layers.get(i + 1).map(|n| &n.layer)) {
            (Layer::Conv2d(c), Some(Layer::BatchNorm(b))) => {
                layers.push(NamedLayer {
                    name: l.name.clone(),
                    role: l.role,
                    layer: Layer::Conv2d(factorizenet::quant::fold_conv_bn(c, b).unwrap()),
                });
                i += 2;
            }
            _ => {
                layers.push(l.clone());
                i += 1;
            }
        }
    }
    Network::new(layers)
}
