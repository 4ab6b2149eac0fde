//! Independent oracles shared by the integration tests and the acceptance
//! harness: finite-difference gradient checks, direct-loop convolution and
//! pooling, pair-counting AUC, hand-computed moments and a bootstrap
//! coverage experiment.
#![allow(dead_code)]

use dwic_core::eval::{auc, bootstrap_ci};
use dwic_core::nn::block::{Bottleneck, Shortcut};
use dwic_core::nn::layers::{AvgPool2d, BatchNorm2d, Conv2d, Dropout, Linear, MaxPool2d, Relu, Softmax};
use dwic_core::nn::ops::{self, BatchNormConfig, Mode, PoolConfig};
use dwic_core::nn::{Model, ModelSpec, Param};
use dwic_core::rng::SeededRng;
use dwic_core::Tensor;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], r: &mut SeededRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.sample(StandardNormal))
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks

pub const FD_EPS: f64 = 1e-5;
/// Step for whole networks: thousands of ReLU and max-pool inputs make a
/// kink inside `+-1e-5` likely for some coordinate.
pub const FD_EPS_NETWORK: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Relative error with a floor on the denominator so that gradients at the
/// level of floating-point noise do not dominate.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// `rel_err` after discounting the rounding error of the central difference
/// itself, about `eps_machine / h` times the loss scale, with a margin for
/// the summations inside the forward pass. Activations are O(1) after batch
/// norm, so the scale is at least 1 even when the loss is small.
fn fd_rel_err(analytic: f64, numeric: f64, lp: f64, lm: f64, h: f64) -> f64 {
    let rounding = 16.0 * f64::EPSILON * (lp.abs() + lm.abs()).max(1.0) / (2.0 * h);
    let diff = ((analytic - numeric).abs() - rounding).max(0.0);
    diff / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Something with an input, parameters and a backward pass.
pub trait Probe {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64>;
    fn n_params(&mut self) -> usize {
        0
    }
    fn with_param(&mut self, _index: usize, _f: &mut dyn FnMut(&mut Param<f64>)) {}
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel: f64,
    pub coords: usize,
}

fn picks(len: usize, max: usize, r: &mut SeededRng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        sample(r, len, max).into_vec()
    }
}

/// Compares analytic gradients of `L = sum(forward(x) * w)`, `w` fixed and
/// random, with central differences at up to `input_coords` input
/// coordinates and `param_coords` coordinates of each parameter tensor.
pub fn grad_check(name: &str, probe: &mut dyn Probe, x: &Tensor<f64>, input_coords: usize, param_coords: usize, seed: u64) -> GradReport {
    grad_check_step(name, probe, x, input_coords, param_coords, seed, FD_EPS)
}

pub fn grad_check_step(
    name: &str,
    probe: &mut dyn Probe,
    x: &Tensor<f64>,
    input_coords: usize,
    param_coords: usize,
    seed: u64,
    h: f64,
) -> GradReport {
    let mut r = rng(seed);
    let y = probe.forward(x);
    let w = randn(y.shape(), &mut r);
    let loss = |probe: &mut dyn Probe, x: &Tensor<f64>| -> f64 {
        let y = probe.forward(x);
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };

    let n_params = probe.n_params();
    for i in 0..n_params {
        probe.with_param(i, &mut |p| p.zero_grad());
    }
    probe.forward(x);
    let gx = probe.backward(&w);
    let mut grads = Vec::with_capacity(n_params);
    for i in 0..n_params {
        probe.with_param(i, &mut |p| grads.push(p.grad.clone()));
    }

    let mut max_rel: f64 = 0.0;
    let mut coords = 0;
    let mut xp = x.clone();
    for i in picks(x.len(), input_coords, &mut r) {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let lp = loss(probe, &xp);
        xp.data_mut()[i] = orig - h;
        let lm = loss(probe, &xp);
        xp.data_mut()[i] = orig;
        max_rel = max_rel.max(fd_rel_err(gx.data()[i], (lp - lm) / (2.0 * h), lp, lm, h));
        coords += 1;
    }
    for (pi, g) in grads.iter().enumerate() {
        for i in picks(g.len(), param_coords, &mut r) {
            let mut orig = 0.0;
            probe.with_param(pi, &mut |p| {
                orig = p.value.data()[i];
                p.value.data_mut()[i] = orig + h;
            });
            let lp = loss(probe, x);
            probe.with_param(pi, &mut |p| p.value.data_mut()[i] = orig - h);
            let lm = loss(probe, x);
            probe.with_param(pi, &mut |p| p.value.data_mut()[i] = orig);
            max_rel = max_rel.max(fd_rel_err(g.data()[i], (lp - lm) / (2.0 * h), lp, lm, h));
            coords += 1;
        }
    }
    GradReport {
        name: name.to_string(),
        max_rel,
        coords,
    }
}

struct ConvP(Conv2d<f64>);
impl Probe for ConvP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
    fn n_params(&mut self) -> usize {
        2
    }
    fn with_param(&mut self, i: usize, f: &mut dyn FnMut(&mut Param<f64>)) {
        f(if i == 0 { &mut self.0.weight } else { &mut self.0.bias })
    }
}

struct BnP(BatchNorm2d<f64>);
impl Probe for BnP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
    fn n_params(&mut self) -> usize {
        2
    }
    fn with_param(&mut self, i: usize, f: &mut dyn FnMut(&mut Param<f64>)) {
        f(if i == 0 { &mut self.0.gamma } else { &mut self.0.beta })
    }
}

struct ReluP(Relu<f64>);
impl Probe for ReluP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x)
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
}

struct MaxP(MaxPool2d);
impl Probe for MaxP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
}

struct AvgP(AvgPool2d);
impl Probe for AvgP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
}

/// Dropout whose mask is redrawn from the same seed on every call.
struct DropP(Dropout<f64>, u64);
impl Probe for DropP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x, Mode::Train, &mut rng(self.1)).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
}

struct LinP(Linear<f64>);
impl Probe for LinP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
    fn n_params(&mut self) -> usize {
        2
    }
    fn with_param(&mut self, i: usize, f: &mut dyn FnMut(&mut Param<f64>)) {
        f(if i == 0 { &mut self.0.weight } else { &mut self.0.bias })
    }
}

struct SoftP(Softmax<f64>);
impl Probe for SoftP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
}

/// Weighted BCE of probability rows, output is the scalar loss.
struct BceP {
    labels: Vec<u8>,
    weights: Option<[f64; 2]>,
    input: Option<Tensor<f64>>,
}
impl Probe for BceP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.input = Some(x.clone());
        Tensor::scalar(ops::bce_loss(x, &self.labels, self.weights).unwrap().0)
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        let x = self.input.take().unwrap();
        let (_, gp) = ops::bce_loss(&x, &self.labels, self.weights).unwrap();
        gp.scale(g.data()[0]).unwrap()
    }
}

/// BCE of softmax(logits), differentiated with the fused logit gradient.
struct FusedP {
    labels: Vec<u8>,
    weights: Option<[f64; 2]>,
    probs: Option<Tensor<f64>>,
}
impl Probe for FusedP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        let p = ops::softmax_forward(x).unwrap();
        let l = ops::bce_loss(&p, &self.labels, self.weights).unwrap().0;
        self.probs = Some(p);
        Tensor::scalar(l)
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        let p = self.probs.take().unwrap();
        let gl = ops::softmax_bce_logit_grad(&p, &self.labels, self.weights).unwrap();
        gl.scale(g.data()[0]).unwrap()
    }
}

fn block_params(b: &mut Bottleneck<f64>) -> Vec<&mut Param<f64>> {
    let mut v = vec![
        &mut b.bn1.gamma,
        &mut b.bn1.beta,
        &mut b.conv1.weight,
        &mut b.conv1.bias,
        &mut b.bn2.gamma,
        &mut b.bn2.beta,
        &mut b.conv2.weight,
        &mut b.conv2.bias,
        &mut b.bn3.gamma,
        &mut b.bn3.beta,
        &mut b.conv3.weight,
        &mut b.conv3.bias,
    ];
    if let Shortcut::Projection(p) = &mut b.shortcut {
        v.push(&mut p.weight);
        v.push(&mut p.bias);
    }
    v
}

struct BlockP(Bottleneck<f64>);
impl Probe for BlockP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap()
    }
    fn n_params(&mut self) -> usize {
        block_params(&mut self.0).len()
    }
    fn with_param(&mut self, i: usize, f: &mut dyn FnMut(&mut Param<f64>)) {
        f(block_params(&mut self.0).swap_remove(i))
    }
}

/// Whole network in train mode with a fixed dropout mask. The model does
/// not return an input gradient, so it is checked on parameters only.
struct ModelP(Model<f64>, u64);
impl Probe for ModelP {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.0.forward(x, Mode::Train, &mut rng(self.1)).unwrap()
    }
    fn backward(&mut self, g: &Tensor<f64>) -> Tensor<f64> {
        self.0.backward(g).unwrap();
        Tensor::zeros(&[0])
    }
    fn n_params(&mut self) -> usize {
        let mut n = 0;
        self.0.for_each_param(|_, _| n += 1);
        n
    }
    fn with_param(&mut self, i: usize, f: &mut dyn FnMut(&mut Param<f64>)) {
        let mut k = 0;
        self.0.for_each_param(|_, p| {
            if k == i {
                f(p);
            }
            k += 1;
        });
    }
}

/// Non-trivial BN affine parameters so their gradients are not symmetric.
fn jitter_bn(bn: &mut BatchNorm2d<f64>, r: &mut SeededRng) {
    for v in bn.gamma.value.data_mut() {
        *v = 0.5 + r.gen::<f64>();
    }
    for v in bn.beta.value.data_mut() {
        *v = r.gen::<f64>() - 0.5;
    }
}

/// The reduced-width 41-layer stack (every layer and block count intact,
/// widths divided by 16).
pub fn narrow_resnet41() -> ModelSpec {
    ModelSpec::resnet41_narrow(16)
}

/// Runs every gradient configuration: each layer kind in several shapes,
/// both block variants, the losses, the toy network and the reduced-width
/// 41-layer stack.
pub fn gradient_suite() -> Vec<GradReport> {
    let mut out = Vec::new();
    let bn = BatchNormConfig::default();
    let mut seed = 1000;
    let mut next = || {
        seed += 1;
        seed
    };

    for &(cin, cout, k, stride, pad, hw) in &[
        (3, 4, 3, 1, 1, 7),
        (2, 3, 3, 2, 1, 8),
        (4, 2, 1, 1, 0, 5),
        (2, 2, 1, 2, 0, 6),
        (6, 3, 7, 2, 0, 15),
        (3, 5, 5, 1, 2, 6),
    ] {
        let s = next();
        let mut r = rng(s);
        let mut conv = Conv2d::new(cin, cout, k, stride, pad, &mut r);
        for b in conv.bias.value.data_mut() {
            *b = r.gen::<f64>() - 0.5;
        }
        let x = randn(&[2, cin, hw, hw], &mut r);
        out.push(grad_check(
            &format!("conv {k}x{k} s{stride} p{pad} {cin}->{cout}"),
            &mut ConvP(conv),
            &x,
            60,
            60,
            s,
        ));
    }
    for &(n, c, hw) in &[(4, 3, 3), (2, 2, 5)] {
        let s = next();
        let mut r = rng(s);
        let mut layer = BatchNorm2d::new(c, bn);
        jitter_bn(&mut layer, &mut r);
        let x = randn(&[n, c, hw, hw], &mut r);
        out.push(grad_check(&format!("batchnorm n{n} c{c} {hw}x{hw}"), &mut BnP(layer), &x, 60, 60, s));
    }
    {
        let s = next();
        let x = randn(&[2, 3, 4, 4], &mut rng(s));
        out.push(grad_check("relu", &mut ReluP(Relu::new()), &x, 96, 0, s));
    }
    for &(k, stride, pad, hw) in &[(3, 2, 0, 9), (3, 2, 1, 8), (2, 2, 0, 6)] {
        let s = next();
        let x = randn(&[2, 2, hw, hw], &mut rng(s));
        let pool = MaxPool2d::new(PoolConfig { kernel: k, stride, pad });
        out.push(grad_check(&format!("maxpool {k}x{k} s{stride} p{pad}"), &mut MaxP(pool), &x, 80, 0, s));
    }
    for &(k, stride, hw) in &[(7, 7, 7), (2, 1, 5)] {
        let s = next();
        let x = randn(&[2, 3, hw, hw], &mut rng(s));
        out.push(grad_check(
            &format!("avgpool {k}x{k} s{stride}"),
            &mut AvgP(AvgPool2d::new(k, stride)),
            &x,
            80,
            0,
            s,
        ));
    }
    {
        let s = next();
        let x = randn(&[4, 10], &mut rng(s));
        out.push(grad_check("dropout p=0.5", &mut DropP(Dropout::new(0.5), s), &x, 40, 0, s));
    }
    for &(fan_in, fan_out) in &[(6, 2), (12, 5)] {
        let s = next();
        let mut r = rng(s);
        let mut lin = Linear::new(fan_in, fan_out, &mut r);
        for b in lin.bias.value.data_mut() {
            *b = r.gen::<f64>() - 0.5;
        }
        let x = randn(&[3, fan_in], &mut r);
        out.push(grad_check(&format!("linear {fan_in}->{fan_out}"), &mut LinP(lin), &x, 60, 60, s));
    }
    {
        let s = next();
        let x = randn(&[4, 2], &mut rng(s));
        out.push(grad_check("softmax", &mut SoftP(Softmax::new()), &x, 8, 0, s));
    }
    for weights in [None, Some([1.0, 3.0])] {
        let s = next();
        let mut r = rng(s);
        let p = ops::softmax_forward(&randn(&[6, 2], &mut r)).unwrap();
        let labels = vec![0, 1, 1, 0, 1, 0];
        let mut probe = BceP {
            labels: labels.clone(),
            weights,
            input: None,
        };
        out.push(grad_check(&format!("bce weights {weights:?}"), &mut probe, &p, 12, 0, s));
        let z = randn(&[6, 2], &mut r);
        let mut probe = FusedP {
            labels,
            weights,
            probs: None,
        };
        out.push(grad_check(&format!("softmax+bce fused weights {weights:?}"), &mut probe, &z, 12, 0, s));
    }
    for &(cin, mid, cout, stride, hw) in &[(8, 2, 8, 1, 5), (4, 2, 6, 2, 6), (4, 3, 8, 1, 4)] {
        let s = next();
        let mut r = rng(s);
        let mut block = Bottleneck::new(cin, mid, cout, stride, bn, &mut r);
        for b in [&mut block.bn1, &mut block.bn2, &mut block.bn3] {
            jitter_bn(b, &mut r);
        }
        let x = randn(&[3, cin, hw, hw], &mut r);
        let kind = if block.has_projection() { "projection" } else { "identity" };
        out.push(grad_check(
            &format!("bottleneck {kind} {cin}-{mid}-{cout} s{stride}"),
            &mut BlockP(block),
            &x,
            40,
            20,
            s,
        ));
    }
    for (name, spec, batch, coords) in [
        ("toy network", ModelSpec::toy(), 3, 6),
        ("reduced-width 41-layer stack", narrow_resnet41(), 2, 3),
    ] {
        let s = next();
        let mut r = rng(s);
        let model = Model::<f64>::new(&spec, &mut r).unwrap();
        let x = randn(&[batch, spec.in_channels, spec.in_size, spec.in_size], &mut r);
        out.push(grad_check_step(name, &mut ModelP(model, s), &x, 0, coords, s, FD_EPS_NETWORK));
    }
    out
}

// ---------------------------------------------------------------------------
// Direct-loop forward oracles

/// `out[n][o][i][j] = b[o] + sum_{c,u,v} x[n][c][i*s+u-p][j*s+v-p] w[o][c][u][v]`.
pub fn conv_loop(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [co, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let xi = |a: usize, b_: usize, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= h as isize || j >= wd as isize {
            0.0
        } else {
            x.data()[((a * c + b_) * h + i as usize) * wd + j as usize]
        }
    };
    let mut out = Vec::with_capacity(n * co * ho * wo);
    for a in 0..n {
        for o in 0..co {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for u in 0..k {
                            for v in 0..k {
                                let ii = (i * stride + u) as isize - pad as isize;
                                let jj = (j * stride + v) as isize - pad as isize;
                                acc += xi(a, ci, ii, jj) * w.data()[((o * c + ci) * k + u) * k + v];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(vec![n, co, ho, wo], out).unwrap()
}

/// Max over each window, ignoring padded positions.
pub fn maxpool_loop(x: &Tensor<f64>, k: usize, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = Vec::new();
    for plane in 0..n * c {
        for i in 0..ho {
            for j in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for u in 0..k {
                    for v in 0..k {
                        let ii = (i * stride + u) as isize - pad as isize;
                        let jj = (j * stride + v) as isize - pad as isize;
                        if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                            m = m.max(x.data()[(plane * h + ii as usize) * w + jj as usize]);
                        }
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out).unwrap()
}

pub fn avgpool_loop(x: &Tensor<f64>, k: usize, stride: usize) -> Tensor<f64> {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = Vec::new();
    for plane in 0..n * c {
        for i in 0..ho {
            for j in 0..wo {
                let mut s = 0.0;
                for u in 0..k {
                    for v in 0..k {
                        s += x.data()[(plane * h + i * stride + u) * w + j * stride + v];
                    }
                }
                out.push(s / (k * k) as f64);
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out).unwrap()
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst deviation of the library conv, max pool and avg pool from the loop
/// oracles over `cases` random configurations of each.
pub fn conv_pool_oracle_cases(cases: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (mut conv_err, mut max_err, mut avg_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let n = r.gen_range(1..=3);
        let c = r.gen_range(1..=4);
        let co = r.gen_range(1..=4);
        let k = [1, 3, 5, 7][r.gen_range(0..4)];
        let stride = r.gen_range(1..=3);
        let pad = r.gen_range(0..=k / 2);
        let h = r.gen_range(k.max(2)..=k + 9);
        let x = randn(&[n, c, h, h], &mut r);
        let w = randn(&[co, c, k, k], &mut r);
        let b = randn(&[co], &mut r);
        let (y, _) = ops::conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        conv_err = conv_err.max(max_abs_diff(&y, &conv_loop(&x, &w, &b, stride, pad)));

        let pk = r.gen_range(1..=4);
        let ps = r.gen_range(1..=3);
        let pp = r.gen_range(0..=pk / 2);
        let ph = r.gen_range(pk..=pk + 8);
        let x = randn(&[n, c, ph, ph], &mut r);
        let (y, _) = ops::maxpool2d_forward(&x, PoolConfig { kernel: pk, stride: ps, pad: pp }).unwrap();
        max_err = max_err.max(max_abs_diff(&y, &maxpool_loop(&x, pk, ps, pp)));
        let y = ops::avgpool2d_forward(&x, pk, ps).unwrap();
        avg_err = avg_err.max(max_abs_diff(&y, &avgpool_loop(&x, pk, ps)));
    }
    (conv_err, max_err, avg_err)
}

// ---------------------------------------------------------------------------
// AUC

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by direct pair counting.
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Random labelled score set with both classes and deliberate ties.
pub fn random_scored_set(r: &mut SeededRng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = r.gen_range(2..=max_n);
    let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let grid = r.gen_bool(0.5);
    let scores = (0..n)
        .map(|_| {
            if grid {
                (r.gen_range(0..6) as f64) / 5.0
            } else {
                r.gen::<f64>()
            }
        })
        .collect();
    (scores, labels)
}

/// Worst `|trapezoid AUC - Mann-Whitney|` over `cases` random sets, n <= 50.
pub fn auc_oracle_cases(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    (0..cases)
        .map(|_| {
            let (s, l) = random_scored_set(&mut r, 50);
            (auc(&s, &l).unwrap() - mann_whitney(&s, &l)).abs()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Hand moments

/// Nine statistics in feature order, written out from the definitions.
pub fn hand_stats(values: &[f64], pca: bool) -> [f64; 9] {
    if values.is_empty() {
        return [0.0; 9];
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    };
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let (skew, kurt) = if hi == lo {
        (0.0, 0.0)
    } else {
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        (m3 / var.powf(1.5), m4 / (var * var) - 3.0)
    };
    [mean, var.sqrt(), var, median, sum, if pca { hi } else { lo }, skew, kurt, hi - lo]
}

/// Keep `> cutoff`, sort descending, top 5, written without the library.
pub fn hand_filter(probs: &[f64], cutoff: f64) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for &p in probs {
        if p > cutoff {
            v.push(p);
        }
    }
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.into_iter().take(5).collect()
}

// ---------------------------------------------------------------------------
// Bootstrap coverage

/// Binormal model with a known AUC: negatives N(0, 1), positives
/// N(mu, 1), so `AUC = Phi(mu / sqrt 2)`.
pub struct Binormal {
    pub mu: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Binormal {
    pub fn true_auc(&self) -> f64 {
        std_normal_cdf(self.mu / 2f64.sqrt())
    }

    pub fn draw(&self, r: &mut SeededRng) -> (Vec<f64>, Vec<u8>) {
        let pos = Normal::new(self.mu, 1.0).unwrap();
        let mut s = Vec::with_capacity(self.n_pos + self.n_neg);
        let mut l = Vec::with_capacity(self.n_pos + self.n_neg);
        for _ in 0..self.n_pos {
            s.push(pos.sample(r));
            l.push(1);
        }
        for _ in 0..self.n_neg {
            s.push(r.sample::<f64, _>(StandardNormal));
            l.push(0);
        }
        (s, l)
    }
}

/// `Phi(x)` via the complementary error function (Numerical Recipes
/// `erfcc`, relative error below 1.2e-7).
pub fn std_normal_cdf(x: f64) -> f64 {
    let z = x.abs() / 2f64.sqrt();
    let t = 1.0 / (1.0 + 0.5 * z);
    let erfc = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// Fraction of `sims` simulated data sets whose percentile interval at
/// `level` covers the true AUC.
pub fn bootstrap_coverage(model: &Binormal, sims: usize, n_boot: usize, level: f64, seed: u64) -> f64 {
    let truth = model.true_auc();
    let mut r = rng(seed);
    let mut covered = 0;
    for sim in 0..sims {
        let (s, l) = model.draw(&mut r);
        let (lo, hi) = bootstrap_ci(&s, &l, n_boot, level, seed.wrapping_add(sim as u64)).unwrap();
        if lo <= truth && truth <= hi {
            covered += 1;
        }
    }
    covered as f64 / sims as f64
}

// ---------------------------------------------------------------------------
// Second-stage features

/// Five members' slice probabilities for two crafted patients: patient 0
/// has 7 slices covering the filter boundaries, patient 1 has 2 slices
/// whose probabilities all sit near 0.5 (every set empty).
pub fn crafted_member_probs() -> (Vec<Vec<f64>>, Vec<usize>) {
    let patient_of = vec![0, 0, 0, 0, 0, 0, 0, 1, 1];
    let members = vec![
        vec![0.9, 0.8, 0.76, 0.7, 0.99, 0.75, 0.73, 0.5, 0.55],
        vec![0.74, 0.26, 0.1, 0.2, 0.05, 0.6, 0.3, 0.45, 0.5],
        vec![0.8, 0.9, 1.0, 0.0, 0.01, 0.02, 0.5, 0.4, 0.6],
        vec![0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.5, 0.5],
        vec![0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.49, 0.51],
    ];
    (members, patient_of)
}

/// Hand-assembled 90-value vectors for [`crafted_member_probs`].
pub fn crafted_oracle(cutoff: f64) -> Vec<Vec<f64>> {
    let (members, patient_of) = crafted_member_probs();
    (0..2)
        .map(|p| {
            let mut v = Vec::new();
            for probs in &members {
                let pca: Vec<f64> = (0..probs.len()).filter(|&s| patient_of[s] == p).map(|s| probs[s]).collect();
                let non: Vec<f64> = pca.iter().map(|x| 1.0 - x).collect();
                v.extend(hand_stats(&hand_filter(&pca, cutoff), true));
                v.extend(hand_stats(&hand_filter(&non, cutoff), false));
            }
            v
        })
        .collect()
}

/// Five informative features (shifted by `effect` for positives) among
/// `n_noise` pure-noise ones; informative columns sit at random positions,
/// returned as the second value.
pub fn planted_features(n: usize, n_noise: usize, effect: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<u8>) {
    let mut r = rng(seed);
    let p = 5 + n_noise;
    let informative = sample(&mut r, p, 5).into_vec();
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = y
        .iter()
        .map(|&label| {
            (0..p)
                .map(|j| {
                    let z: f64 = r.sample(StandardNormal);
                    if informative.contains(&j) {
                        z + effect * label as f64
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect();
    (x, informative, y)
}

// ---------------------------------------------------------------------------
// Architecture

#[derive(Debug)]
pub struct ArchReport {
    pub output_shape: Vec<usize>,
    /// Largest `|p0 + p1 - 1|` over a random batch.
    pub prob_sum_err: f64,
    pub weighted: usize,
    pub convs: usize,
    pub fcs: usize,
    pub blocks_per_stage: Vec<usize>,
}

/// Builds the default network, runs a random 6x66x66 batch through it in
/// eval mode and counts its weighted layers.
pub fn architecture_report() -> ArchReport {
    let spec = ModelSpec::resnet41();
    let mut r = rng(41);
    let mut model = Model::<f32>::new(&spec, &mut r).unwrap();
    let x = randn(&[3, 6, 66, 66], &mut r).cast::<f32>();
    let p = model.forward(&x, Mode::Eval, &mut r).unwrap();
    let prob_sum_err = p
        .data()
        .chunks(2)
        .map(|c| (c[0] as f64 + c[1] as f64 - 1.0).abs())
        .fold(0.0, f64::max);
    let layers = spec.layers().unwrap();
    let weighted: Vec<_> = layers.iter().filter(|l| l.weighted).collect();
    ArchReport {
        output_shape: p.shape().to_vec(),
        prob_sum_err,
        weighted: spec.weighted_layer_count().unwrap(),
        convs: weighted.iter().filter(|l| l.kind == "conv2d").count(),
        fcs: weighted.iter().filter(|l| l.kind == "linear").count(),
        blocks_per_stage: spec.stages.iter().map(|s| s.blocks).collect(),
    }
}

/// Zeroes every residual-branch convolution of the default network and
/// returns the largest deviation between input and output over all
/// identity-shortcut blocks, together with how many blocks were checked.
pub fn residual_identity_error() -> (f64, usize) {
    let spec = ModelSpec::resnet41();
    let mut r = rng(42);
    let mut model = Model::<f32>::new(&spec, &mut r).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut hw = 14;
    for block in &mut model.blocks {
        for conv in block.branch_convs_mut() {
            conv.weight.value.data_mut().fill(0.0);
            conv.bias.value.data_mut().fill(0.0);
        }
        if block.has_projection() {
            if block.conv2.stride == 2 {
                hw /= 2;
            }
            continue;
        }
        let x = randn(&[2, block.in_channels(), hw, hw], &mut r).cast::<f32>();
        for mode in [Mode::Train, Mode::Eval] {
            let y = block.forward(&x, mode).unwrap();
            let d = y
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).abs() as f64)
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
        checked += 1;
    }
    (worst, checked)
}
