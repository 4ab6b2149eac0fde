//! Parameter-owning layers. Each keeps the cache of its last train-mode (or
//! eval-mode) forward call so that `backward` can be invoked afterwards.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{self, BatchNormConfig, ConvCache, MaxPoolCache, Mode, PoolConfig};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

/// A learnable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Element> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }

    fn accumulate(&mut self, g: &Tensor<T>) {
        for (a, &b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a = *a + b;
        }
    }
}

/// Callback used to walk named parameters and buffers.
pub trait Visitor<T> {
    fn param(&mut self, name: &str, p: &mut Param<T>);
    fn buffer(&mut self, name: &str, t: &mut Tensor<T>);
}

fn he_normal<T: Element>(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(normal.sample(rng)))
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<ConvCache<T>>,
}

impl<T: Element> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let w = he_normal(&[out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel, rng);
        Self::from_weights(w, Tensor::zeros(&[out_ch]), stride, pad)
    }

    pub fn from_weights(weight: Tensor<T>, bias: Tensor<T>, stride: usize, pad: usize) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) =
            ops::conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)?;
        self.cache = Some(cache);
        Ok(y)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    /// Consumes the cache; a second call without a new forward is an error.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::MissingCache("conv2d".into()))?;
        let g = ops::conv2d_backward(grad_out, &cache, &self.weight.value)?;
        self.weight.accumulate(&g.grad_w);
        self.bias.accumulate(&g.grad_b);
        Ok(g.grad_x)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&format!("{prefix}.weight"), &mut self.weight);
        v.param(&format!("{prefix}.bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub cfg: BatchNormConfig,
    cache: Option<ops::BatchNormCache<T>>,
}

impl<T: Element> BatchNorm2d<T> {
    pub fn new(channels: usize, cfg: BatchNormConfig) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cfg,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (y, cache) = ops::batchnorm2d_forward(
            x,
            &self.gamma.value,
            &self.beta.value,
            &mut self.running_mean,
            &mut self.running_var,
            self.cfg,
            mode,
        )?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::MissingCache("batchnorm2d".into()))?;
        let g = ops::batchnorm2d_backward(grad_out, &cache, &self.gamma.value)?;
        self.gamma.accumulate(&g.grad_gamma);
        self.beta.accumulate(&g.grad_beta);
        Ok(g.grad_x)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&format!("{prefix}.gamma"), &mut self.gamma);
        v.param(&format!("{prefix}.beta"), &mut self.beta);
        v.buffer(&format!("{prefix}.running_mean"), &mut self.running_mean);
        v.buffer(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Element> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        ops::relu_forward(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| Error::MissingCache("relu".into()))?;
        ops::relu_backward(grad_out, &x)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub cfg: PoolConfig,
    cache: Option<MaxPoolCache>,
}

impl MaxPool2d {
    pub fn new(cfg: PoolConfig) -> Self {
        Self { cfg, cache: None }
    }

    pub fn forward<T: Element>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = ops::maxpool2d_forward(x, self.cfg)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward<T: Element>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::MissingCache("maxpool2d".into()))?;
        ops::maxpool2d_backward(grad_out, &cache)
    }
}

#[derive(Debug, Clone)]
pub struct AvgPool2d {
    pub kernel: usize,
    pub stride: usize,
    input_shape: Option<[usize; 4]>,
}

impl AvgPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            input_shape: None,
        }
    }

    pub fn forward<T: Element>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = ops::dims4(x, "avgpool2d")?;
        let y = ops::avgpool2d_forward(x, self.kernel, self.stride)?;
        self.input_shape = Some(shape);
        Ok(y)
    }

    pub fn backward<T: Element>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .take()
            .ok_or_else(|| Error::MissingCache("avgpool2d".into()))?;
        ops::avgpool2d_backward(grad_out, shape, self.kernel, self.stride)
    }
}

#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub p: f64,
    mask: Option<Option<Vec<T>>>,
}

impl<T: Element> Dropout<T> {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        let (y, mask) = ops::dropout_forward(x, self.p, mode, rng)?;
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(|| Error::MissingCache("dropout".into()))?;
        ops::dropout_backward(grad_out, mask.as_deref())
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Element> Linear<T> {
    /// Normal(0, 1/fan_in) weights, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let std = (1.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let w = Tensor::from_fn(&[fan_out, fan_in], |_| T::from_f64_lossy(normal.sample(rng)));
        Self {
            weight: Param::new(w),
            bias: Param::new(Tensor::zeros(&[fan_out])),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = ops::linear_forward(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| Error::MissingCache("linear".into()))?;
        let g = ops::linear_backward(grad_out, &x, &self.weight.value)?;
        self.weight.accumulate(&g.grad_w);
        self.bias.accumulate(&g.grad_b);
        Ok(g.grad_x)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&format!("{prefix}.weight"), &mut self.weight);
        v.param(&format!("{prefix}.bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Softmax<T> {
    probs: Option<Tensor<T>>,
}

impl<T: Element> Softmax<T> {
    pub fn new() -> Self {
        Self { probs: None }
    }

    pub fn forward(&mut self, logits: &Tensor<T>) -> Result<Tensor<T>> {
        let p = ops::softmax_forward(logits)?;
        self.probs = Some(p.clone());
        Ok(p)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self.probs.take().ok_or_else(|| Error::MissingCache("softmax".into()))?;
        ops::softmax_backward(grad_out, &p)
    }

    /// Drops the cached probabilities; used when the loss gradient is
    /// injected directly at the logits.
    pub fn skip_backward(&mut self) {
        self.probs = None;
    }
}
