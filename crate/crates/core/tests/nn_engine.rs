mod common;

use common::*;
use factorizenet::nn::*;
use factorizenet::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn conv_from(weight: Tensor<f64>, bias: Tensor<f64>, groups: usize, stride: usize, pad: usize) -> Conv2d<f64> {
    Conv2d::new(weight, bias, groups, stride, pad).unwrap()
}

#[test]
fn grouped_conv_matches_loop_nest() {
    let mut r = rng(1);
    let x = random_tensor(&[2, 4, 8, 8], &mut r);
    let w = random_tensor(&[8, 2, 3, 3], &mut r);
    let b = random_tensor(&[8], &mut r);
    let conv = conv_from(w.clone(), b.clone(), 2, 1, 1);
    let y = conv2d_forward(&x.cast::<f32>(), &conv.cast_f32()).unwrap();
    let (expected, oh, ow) = naive_conv(x.data(), (2, 4, 8, 8), w.data(), b.data(), 8, 3, 2, 1, 1);
    assert_eq!(y.shape(), &[2, 8, oh, ow]);
    for (a, e) in y.data().iter().zip(&expected) {
        assert!((*a as f64 - e).abs() < 1e-5, "{a} vs {e}");
    }
}

trait CastF32 {
    fn cast_f32(&self) -> Conv2d<f32>;
}

impl CastF32 for Conv2d<f64> {
    fn cast_f32(&self) -> Conv2d<f32> {
        Conv2d::new(self.weight.cast(), self.bias.cast(), self.groups, self.stride, self.padding).unwrap()
    }
}

#[test]
fn depthwise_equals_independent_per_channel_conv() {
    let mut r = rng(2);
    let (c, m) = (3, 2);
    let x = random_tensor(&[2, c, 6, 6], &mut r);
    let w = random_tensor(&[c * m, 1, 3, 3], &mut r);
    let b = random_tensor(&[c * m], &mut r);
    let y = conv2d_forward(&x, &conv_from(w.clone(), b.clone(), c, 1, 1)).unwrap();
    for ch in 0..c {
        // channel `ch` alone through its `m` filters as a plain convolution
        let xi: Vec<f64> = (0..2)
            .flat_map(|s| x.data()[(s * c + ch) * 36..][..36].to_vec())
            .collect();
        let wi = w.data()[ch * m * 9..][..m * 9].to_vec();
        let bi = b.data()[ch * m..][..m].to_vec();
        let single = conv2d_forward(
            &Tensor::new(&[2, 1, 6, 6], xi).unwrap(),
            &conv_from(Tensor::new(&[m, 1, 3, 3], wi).unwrap(), Tensor::new(&[m], bi).unwrap(), 1, 1, 1),
        )
        .unwrap();
        for s in 0..2 {
            for j in 0..m {
                let got = &y.data()[(s * c * m + ch * m + j) * 36..][..36];
                let want = &single.data()[(s * m + j) * 36..][..36];
                assert_eq!(got, want);
            }
        }
    }
}

/// Projects a layer output onto a fixed random direction to get a scalar loss.
struct Probe {
    dir: Vec<f64>,
}

impl Probe {
    fn upstream(&self, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(shape, self.dir.clone()).unwrap()
    }
}

fn probe(len: usize, seed: u64) -> Probe {
    let mut r = rng(seed);
    Probe {
        dir: (0..len).map(|_| r.random_range(-1.0..1.0)).collect(),
    }
}

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;
const FLOOR: f64 = 1e-8;
/// Conv and dense outputs are exactly linear in each weight, bias and input
/// entry, so a large step has no truncation error and far less cancellation.
const LINEAR_H: f64 = 1e-2;

fn check_conv_grads(groups: usize, stride: usize, seed: u64) {
    let mut r = rng(seed);
    let (n, c_in, c_out, hw, k) = (2, 8, 8, 5, 3);
    let x = random_tensor(&[n, c_in, hw, hw], &mut r);
    let w = random_tensor(&[c_out, c_in / groups, k, k], &mut r);
    let b = random_tensor(&[c_out], &mut r);
    let conv = conv_from(w.clone(), b.clone(), groups, stride, 1);
    let y = conv2d_forward(&x, &conv).unwrap();
    let pr = probe(y.len(), seed + 100);
    let g = conv2d_backward(&x, &conv, &pr.upstream(y.shape())).unwrap();

    let fw = central_diff_projected(w.data(), LINEAR_H, &pr.dir, |p| {
        let c = conv_from(Tensor::new(w.shape(), p.to_vec()).unwrap(), b.clone(), groups, stride, 1);
        conv2d_forward(&x, &c).unwrap().into_data()
    });
    let fb = central_diff_projected(b.data(), LINEAR_H, &pr.dir, |p| {
        let c = conv_from(w.clone(), Tensor::new(b.shape(), p.to_vec()).unwrap(), groups, stride, 1);
        conv2d_forward(&x, &c).unwrap().into_data()
    });
    let fx = central_diff_projected(x.data(), LINEAR_H, &pr.dir, |p| {
        conv2d_forward(&Tensor::new(x.shape(), p.to_vec()).unwrap(), &conv).unwrap().into_data()
    });
    for (name, a, f) in [
        ("weight", g.params[0].data(), &fw),
        ("bias", g.params[1].data(), &fb),
        ("input", g.input.data(), &fx),
    ] {
        let e = max_rel_err(a, f, FLOOR);
        assert!(e < TOL, "groups={groups} stride={stride} {name} rel err {e}");
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    for (i, f) in [1, 2, 4, 8].into_iter().enumerate() {
        check_conv_grads(f, 1, 10 + i as u64);
    }
    check_conv_grads(2, 2, 20);
}

#[test]
fn conv_gradients_in_f32_within_loose_tolerance() {
    let mut r = rng(5);
    let x = random_tensor(&[1, 4, 4, 4], &mut r);
    let w = random_tensor(&[4, 2, 3, 3], &mut r);
    let b = random_tensor(&[4], &mut r);
    let conv = conv_from(w.clone(), b.clone(), 2, 1, 1).cast_f32();
    let x32 = x.cast::<f32>();
    let y = conv2d_forward(&x32, &conv).unwrap();
    let pr = probe(y.len(), 6);
    let up = pr.upstream(y.shape()).cast::<f32>();
    let g = conv2d_backward(&x32, &conv, &up).unwrap();
    let w32: Vec<f64> = conv.weight.data().iter().map(|&v| v as f64).collect();
    let dir: Vec<f64> = up.data().iter().map(|&v| v as f64).collect();
    let fw = central_diff_projected(&w32, 1e-3, &dir, |p| {
        let mut c = conv.clone();
        c.weight = Tensor::new(conv.weight.shape(), p.iter().map(|&v| v as f32).collect()).unwrap();
        conv2d_forward(&x32, &c).unwrap().data().iter().map(|&v| v as f64).collect()
    });
    let analytic: Vec<f64> = g.params[0].data().iter().map(|&v| v as f64).collect();
    assert!(max_rel_err(&analytic, &fw, 1e-2) < 1e-2);
}

#[test]
fn batchnorm_train_gradients_match_finite_differences() {
    let mut r = rng(30);
    let x = random_tensor(&[3, 4, 3, 3], &mut r);
    let mut bn = BatchNorm::<f64>::new(4);
    bn.gamma = random_tensor(&[4], &mut r);
    bn.beta = random_tensor(&[4], &mut r);
    let (y, cache) = batchnorm_forward_train(&x, &mut bn.clone()).unwrap();
    let pr = probe(y.len(), 31);
    let g = batchnorm_backward(&cache, &bn, &pr.upstream(y.shape())).unwrap();
    let eval = |bn: &BatchNorm<f64>, x: &Tensor<f64>| batchnorm_forward_train(x, &mut bn.clone()).unwrap().0.into_data();

    let fx = central_diff_projected(x.data(), H, &pr.dir, |p| eval(&bn, &Tensor::new(x.shape(), p.to_vec()).unwrap()));
    let fg = central_diff_projected(bn.gamma.data(), H, &pr.dir, |p| {
        let mut b = bn.clone();
        b.gamma = Tensor::new(&[4], p.to_vec()).unwrap();
        eval(&b, &x)
    });
    let fb = central_diff_projected(bn.beta.data(), H, &pr.dir, |p| {
        let mut b = bn.clone();
        b.beta = Tensor::new(&[4], p.to_vec()).unwrap();
        eval(&b, &x)
    });
    assert!(max_rel_err(g.input.data(), &fx, FLOOR) < TOL);
    assert!(max_rel_err(g.params[0].data(), &fg, FLOOR) < TOL);
    assert!(max_rel_err(g.params[1].data(), &fb, FLOOR) < TOL);
}

#[test]
fn relu_and_maxpool_gradients_match_finite_differences() {
    let mut r = rng(40);
    // keep values away from the ReLU kink and from ties inside pool windows
    let x = Tensor::from_fn(&[2, 3, 4, 4], |i| {
        let mag = 0.05 + (i as f64) * 0.01 + r.random_range(0.0..0.004);
        if i % 3 == 0 { -mag } else { mag }
    });
    let y = relu_forward(&x);
    let pr = probe(y.len(), 41);
    let g = relu_backward(&x, &pr.upstream(y.shape())).unwrap();
    let f = central_diff_projected(x.data(), H, &pr.dir, |p| relu_forward(&Tensor::new(x.shape(), p.to_vec()).unwrap()).into_data());
    assert!(max_rel_err(g.data(), &f, FLOOR) < TOL);

    let pool = maxpool2d_forward(&x, 2, 2).unwrap();
    let pr = probe(pool.output.len(), 42);
    let g = maxpool2d_backward(x.shape(), &pool.argmax, &pr.upstream(pool.output.shape())).unwrap();
    let f = central_diff_projected(x.data(), H, &pr.dir, |p| {
        maxpool2d_forward(&Tensor::new(x.shape(), p.to_vec()).unwrap(), 2, 2).unwrap().output.into_data()
    });
    assert!(max_rel_err(g.data(), &f, FLOOR) < TOL);
}

#[test]
fn dense_and_softmax_gradients_match_finite_differences() {
    let mut r = rng(50);
    let x = random_tensor(&[3, 2, 2, 2], &mut r);
    let mut d = Dense::<f64>::zeros(8, 5);
    d.weight = random_tensor(&[5, 8], &mut r);
    d.bias = random_tensor(&[5], &mut r);
    let y = dense_forward(&x, &d).unwrap();
    let pr = probe(y.len(), 51);
    let g = dense_backward(&x, &d, &pr.upstream(y.shape())).unwrap();
    let fw = central_diff_projected(d.weight.data(), LINEAR_H, &pr.dir, |p| {
        let mut dd = d.clone();
        dd.weight = Tensor::new(&[5, 8], p.to_vec()).unwrap();
        dense_forward(&x, &dd).unwrap().into_data()
    });
    let fx = central_diff_projected(x.data(), LINEAR_H, &pr.dir, |p| dense_forward(&Tensor::new(x.shape(), p.to_vec()).unwrap(), &d).unwrap().into_data());
    assert!(max_rel_err(g.params[0].data(), &fw, FLOOR) < TOL);
    assert!(max_rel_err(g.input.data(), &fx, FLOOR) < TOL);

    let labels = [1, 4, 0];
    let out = softmax_crossentropy(&y, &labels).unwrap();
    let f = central_diff(y.data(), H, |p| {
        softmax_crossentropy(&Tensor::new(y.shape(), p.to_vec()).unwrap(), &labels).unwrap().loss
    });
    assert!(max_rel_err(out.grad.data(), &f, FLOOR) < TOL);
}

#[test]
fn batchnorm_train_matches_two_pass_oracle() {
    let mut r = rng(60);
    let x = random_tensor(&[4, 8, 4, 4], &mut r).cast::<f32>();
    let mut bn = BatchNorm::<f32>::new(8);
    bn.gamma = random_tensor(&[8], &mut r).cast();
    bn.beta = random_tensor(&[8], &mut r).cast();
    let y = batchnorm_forward(&x, &mut bn.clone(), BnMode::Train).unwrap();
    let xd: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    for c in 0..8 {
        let idx: Vec<usize> = (0..4).flat_map(|n| ((n * 8 + c) * 16)..((n * 8 + c) * 16 + 16)).collect();
        let mean = idx.iter().map(|&i| xd[i]).sum::<f64>() / idx.len() as f64;
        let var = idx.iter().map(|&i| (xd[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
        for &i in &idx {
            let want = bn.gamma.data()[c] as f64 * (xd[i] - mean) / (var + 1e-3).sqrt() + bn.beta.data()[c] as f64;
            assert!((y.data()[i] as f64 - want).abs() < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_is_linear_in_input_and_weights(seed in 0u64..1000, a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = random_tensor(&[1, 4, 5, 5], &mut r);
        let w = random_tensor(&[4, 2, 3, 3], &mut r);
        let conv = conv_from(w.clone(), Tensor::zeros(&[4]), 2, 1, 1);
        let y = conv2d_forward(&x, &conv).unwrap();
        let ya = conv2d_forward(&x.scale(a), &conv).unwrap();
        let yw = conv2d_forward(&x, &conv_from(w.scale(a), Tensor::zeros(&[4]), 2, 1, 1)).unwrap();
        prop_assert!(ya.max_abs_diff(&y.scale(a)).unwrap() < 1e-12);
        prop_assert!(yw.max_abs_diff(&y.scale(a)).unwrap() < 1e-12);
    }

    #[test]
    fn finite_inputs_give_finite_outputs(seed in 0u64..1000) {
        let mut r = rng(seed);
        let x = random_tensor(&[2, 4, 4, 4], &mut r).scale(1e3).cast::<f32>();
        let conv = conv_from(random_tensor(&[4, 1, 3, 3], &mut r), random_tensor(&[4], &mut r), 4, 1, 1).cast_f32();
        let y = conv2d_forward(&x, &conv).unwrap();
        let mut bn = BatchNorm::<f32>::new(4);
        let z = batchnorm_forward(&y, &mut bn, BnMode::Train).unwrap();
        prop_assert!(y.all_finite() && z.all_finite());
    }
}
