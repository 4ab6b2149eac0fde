//! Declarative network description and the runnable model built from it.
//!
//! The default [`ModelSpec::resnet41`] composes as follows for a 6x66x66 slice
//! (padding chosen so the 7x7 average pool is global):
//!
//! | stage                         | output         |
//! |-------------------------------|----------------|
//! | input                         | 6 x 66 x 66    |
//! | conv 7x7, 64, stride 2, pad 0 | 64 x 30 x 30   |
//! | max pool 3x3, stride 2, pad 0 | 64 x 14 x 14   |
//! | block1 [64, 64, 256] x 4      | 256 x 14 x 14  |
//! | block2 [128, 128, 512] x 9    | 512 x 7 x 7    |
//! | BN -> ReLU                    | 512 x 7 x 7    |
//! | avg pool 7x7                  | 512 x 1 x 1    |
//! | dropout, FC -> 2, softmax     | 2              |
//!
//! The first block of each stage uses a projection shortcut; block2's first
//! block carries stride 2 in its 3x3 convolution and its projection.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::block::Bottleneck;
use super::layers::{AvgPool2d, BatchNorm2d, Conv2d, Dropout, Linear, MaxPool2d, Param, Relu, Softmax, Visitor};
use super::ops::{self, BatchNormConfig, Mode, PoolConfig};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub mid: usize,
    pub out: usize,
    pub blocks: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub in_size: usize,
    pub classes: usize,
    pub stem: StemSpec,
    pub stem_pool: PoolConfig,
    pub stages: Vec<StageSpec>,
    /// Final BN -> ReLU before pooling, as in pre-activation ResNets.
    pub head_norm: bool,
    pub avg_pool: usize,
    pub dropout: f64,
    /// Optional hidden fully-connected layer (with ReLU) before the classifier.
    pub fc_hidden: Option<usize>,
    pub batchnorm: BatchNormConfig,
}

/// Flattened description of one layer in the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: &'static str,
    /// Counted towards network depth (main-path conv or fully-connected).
    pub weighted: bool,
    pub output: [usize; 3],
}

impl ModelSpec {
    /// The 41-layer network: 7x7 stem, 4 + 9 bottleneck blocks, FC to 2.
    pub fn resnet41() -> Self {
        Self {
            in_channels: 6,
            in_size: 66,
            classes: 2,
            stem: StemSpec {
                channels: 64,
                kernel: 7,
                stride: 2,
                pad: 0,
            },
            stem_pool: PoolConfig {
                kernel: 3,
                stride: 2,
                pad: 0,
            },
            stages: vec![
                StageSpec {
                    mid: 64,
                    out: 256,
                    blocks: 4,
                    stride: 1,
                },
                StageSpec {
                    mid: 128,
                    out: 512,
                    blocks: 9,
                    stride: 2,
                },
            ],
            head_norm: true,
            avg_pool: 7,
            dropout: 0.9,
            fc_hidden: None,
            batchnorm: BatchNormConfig::default(),
        }
    }

    /// Same layout with every width divided by `divisor` (minimum 1).
    pub fn resnet41_narrow(divisor: usize) -> Self {
        let mut s = Self::resnet41();
        let d = |c: usize| (c / divisor).max(1);
        s.stem.channels = d(s.stem.channels);
        for st in &mut s.stages {
            st.mid = d(st.mid);
            st.out = d(st.out);
        }
        s
    }

    /// Shallow variant for desk-scale training: one block per stage and
    /// narrow widths, keeping the 41-layer spatial chain. Dropout is lowered
    /// to 0.5 because dropping 90% of a 32-wide feature vector leaves too
    /// little signal to learn from.
    pub fn toy() -> Self {
        let mut s = Self::resnet41();
        s.stem.channels = 8;
        s.dropout = 0.5;
        s.stages = vec![
            StageSpec {
                mid: 8,
                out: 16,
                blocks: 1,
                stride: 1,
            },
            StageSpec {
                mid: 8,
                out: 32,
                blocks: 1,
                stride: 2,
            },
        ];
        s
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialises")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_json().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        crate::hex(&self.hash())
    }

    /// Walks the spatial chain and returns every layer with its output shape.
    pub fn layers(&self) -> Result<Vec<LayerDesc>> {
        if self.in_channels == 0 || self.in_size == 0 || self.classes < 2 {
            return Err(Error::invalid("model needs input channels, size and at least 2 classes"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let mut out = Vec::new();
        let mut hw = self.in_size;
        let mut push = |name: String, kind, weighted, c: usize, hw: usize| {
            out.push(LayerDesc {
                name,
                kind,
                weighted,
                output: [c, hw, hw],
            })
        };
        hw = ops::out_extent(hw, self.stem.kernel, self.stem.stride, self.stem.pad)?;
        let mut c = self.stem.channels;
        push("stem.conv".into(), "conv2d", true, c, hw);
        hw = ops::out_extent(hw, self.stem_pool.kernel, self.stem_pool.stride, self.stem_pool.pad)?;
        push("stem.pool".into(), "maxpool", false, c, hw);
        for (si, st) in self.stages.iter().enumerate() {
            if st.blocks == 0 || st.mid == 0 || st.out == 0 || st.stride == 0 {
                return Err(Error::invalid(format!("stage {si} has a zero-sized field")));
            }
            for b in 0..st.blocks {
                let stride = if b == 0 { st.stride } else { 1 };
                let name = format!("stage{}.{}", si + 1, b);
                let in_c = c;
                push(format!("{name}.conv1"), "conv2d", true, st.mid, hw);
                hw = ops::out_extent(hw, 3, stride, 1)?;
                push(format!("{name}.conv2"), "conv2d", true, st.mid, hw);
                push(format!("{name}.conv3"), "conv2d", true, st.out, hw);
                if in_c != st.out || stride != 1 {
                    push(format!("{name}.shortcut"), "conv2d", false, st.out, hw);
                }
                c = st.out;
            }
        }
        if self.head_norm {
            push("head.bn".into(), "batchnorm", false, c, hw);
        }
        hw = ops::out_extent(hw, self.avg_pool, self.avg_pool, 0)?;
        push("head.avgpool".into(), "avgpool", false, c, hw);
        push("head.dropout".into(), "dropout", false, c, hw);
        if let Some(h) = self.fc_hidden {
            push("head.hidden".into(), "linear", true, h, 1);
        }
        push("head.fc".into(), "linear", true, self.classes, 1);
        push("head.softmax".into(), "softmax", false, self.classes, 1);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.layers().map(|_| ())
    }

    /// Main-path convolutions plus fully-connected layers (projection
    /// shortcuts are not counted).
    pub fn weighted_layer_count(&self) -> Result<usize> {
        Ok(self.layers()?.iter().filter(|l| l.weighted).count())
    }

    fn feature_len(&self) -> Result<usize> {
        let layers = self.layers()?;
        let pool = layers
            .iter()
            .find(|l| l.name == "head.avgpool")
            .expect("avgpool always present");
        Ok(pool.output.iter().product())
    }
}

#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    spec: ModelSpec,
    pub stem: Conv2d<T>,
    stem_pool: MaxPool2d,
    pub blocks: Vec<Bottleneck<T>>,
    pub head_bn: Option<BatchNorm2d<T>>,
    head_relu: Relu<T>,
    avgpool: AvgPool2d,
    dropout: Dropout<T>,
    pub hidden: Option<(Linear<T>, Relu<T>)>,
    pub fc: Linear<T>,
    softmax: Softmax<T>,
    pooled_shape: Option<Vec<usize>>,
}

impl<T: Element> Model<T> {
    /// Builds the network with He-normal conv weights drawn from `rng`.
    pub fn new(spec: &ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let feat = spec.feature_len()?;
        let stem = Conv2d::new(
            spec.in_channels,
            spec.stem.channels,
            spec.stem.kernel,
            spec.stem.stride,
            spec.stem.pad,
            rng,
        );
        let mut blocks = Vec::new();
        let mut c = spec.stem.channels;
        for st in &spec.stages {
            for b in 0..st.blocks {
                let stride = if b == 0 { st.stride } else { 1 };
                blocks.push(Bottleneck::new(c, st.mid, st.out, stride, spec.batchnorm, rng));
                c = st.out;
            }
        }
        let head_bn = spec.head_norm.then(|| BatchNorm2d::new(c, spec.batchnorm));
        let (hidden, fc_in) = match spec.fc_hidden {
            Some(h) => (Some((Linear::new(feat, h, rng), Relu::new())), h),
            None => (None, feat),
        };
        let fc = Linear::new(fc_in, spec.classes, rng);
        Ok(Self {
            spec: spec.clone(),
            stem,
            stem_pool: MaxPool2d::new(spec.stem_pool),
            blocks,
            head_bn,
            head_relu: Relu::new(),
            avgpool: AvgPool2d::new(spec.avg_pool, spec.avg_pool),
            dropout: Dropout::new(spec.dropout),
            hidden,
            fc,
            softmax: Softmax::new(),
            pooled_shape: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Class probabilities `[N, classes]` for a `[N, C, H, W]` batch.
    /// `rng` drives the dropout mask in train mode.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut SeededRng) -> Result<Tensor<T>> {
        let s = &self.spec;
        match *x.shape() {
            [_, c, h, w] if c == s.in_channels && h == s.in_size && w == s.in_size => {}
            ref shape => {
                return Err(Error::shape(format!(
                    "model expects [N, {}, {}, {}], got {shape:?}",
                    s.in_channels, s.in_size, s.in_size
                )))
            }
        }
        let mut h = self.stem.forward(x)?;
        h = self.stem_pool.forward(&h)?;
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        if let Some(bn) = &mut self.head_bn {
            h = bn.forward(&h, mode)?;
            h = self.head_relu.forward(&h);
        }
        h = self.avgpool.forward(&h)?;
        self.pooled_shape = Some(h.shape().to_vec());
        let n = h.shape()[0];
        let flat = h.len() / n;
        h = h.into_reshape(&[n, flat])?;
        h = self.dropout.forward(&h, mode, rng)?;
        if let Some((lin, relu)) = &mut self.hidden {
            h = lin.forward(&h)?;
            h = relu.forward(&h);
        }
        let logits = self.fc.forward(&h)?;
        self.softmax.forward(&logits)
    }

    /// Backpropagates a gradient with respect to the output probabilities.
    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<()> {
        let g = self.softmax.backward(grad_probs)?;
        self.backward_from_logits_inner(&g)
    }

    /// Backpropagates a gradient with respect to the pre-softmax logits.
    pub fn backward_from_logits(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        self.softmax.skip_backward();
        self.backward_from_logits_inner(grad_logits)
    }

    fn backward_from_logits_inner(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        let mut g = self.fc.backward(grad_logits)?;
        if let Some((lin, relu)) = &mut self.hidden {
            g = relu.backward(&g)?;
            g = lin.backward(&g)?;
        }
        g = self.dropout.backward(&g)?;
        let shape = self
            .pooled_shape
            .take()
            .ok_or_else(|| Error::MissingCache("model head".into()))?;
        g = g.into_reshape(&shape)?;
        g = self.avgpool.backward(&g)?;
        if let Some(bn) = &mut self.head_bn {
            g = self.head_relu.backward(&g)?;
            g = bn.backward(&g)?;
        }
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        g = self.stem_pool.backward(&g)?;
        self.stem.backward(&g)?;
        Ok(())
    }

    /// Visits every parameter and buffer under a stable hierarchical name.
    pub fn visit(&mut self, v: &mut dyn Visitor<T>) {
        self.stem.visit("stem.conv", v);
        let mut idx = 0;
        for (si, st) in self.spec.stages.iter().enumerate() {
            for b in 0..st.blocks {
                self.blocks[idx].visit(&format!("stage{}.{}", si + 1, b), v);
                idx += 1;
            }
        }
        if let Some(bn) = &mut self.head_bn {
            bn.visit("head.bn", v);
        }
        if let Some((lin, _)) = &mut self.hidden {
            lin.visit("head.hidden", v);
        }
        self.fc.visit("head.fc", v);
    }

    pub fn zero_grad(&mut self) {
        self.for_each_param(|_, p| p.zero_grad());
    }

    pub fn for_each_param(&mut self, f: impl FnMut(&str, &mut Param<T>)) {
        struct P<F>(F);
        impl<T, F: FnMut(&str, &mut Param<T>)> Visitor<T> for P<F> {
            fn param(&mut self, name: &str, p: &mut Param<T>) {
                (self.0)(name, p)
            }
            fn buffer(&mut self, _: &str, _: &mut Tensor<T>) {}
        }
        self.visit(&mut P(f));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.for_each_param(|_, p| n += p.value.len());
        n
    }

    /// Every named tensor (parameters first-class, buffers included), in
    /// visiting order.
    pub fn named_tensors(&mut self) -> Vec<(String, Tensor<T>)> {
        struct Collect<T>(Vec<(String, Tensor<T>)>);
        impl<T: Element> Visitor<T> for Collect<T> {
            fn param(&mut self, name: &str, p: &mut Param<T>) {
                self.0.push((name.to_string(), p.value.clone()));
            }
            fn buffer(&mut self, name: &str, t: &mut Tensor<T>) {
                self.0.push((name.to_string(), t.clone()));
            }
        }
        let mut c = Collect(Vec::new());
        self.visit(&mut c);
        c.0
    }

    /// Replaces the named tensors; every model tensor must be supplied with
    /// a matching shape.
    pub fn load_named_tensors(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        struct Load<'a, T> {
            src: std::collections::HashMap<&'a str, &'a Tensor<T>>,
            err: Option<Error>,
            used: usize,
        }
        impl<T: Element> Load<'_, T> {
            fn take(&mut self, name: &str, dst: &mut Tensor<T>) {
                if self.err.is_some() {
                    return;
                }
                match self.src.get(name) {
                    Some(t) if t.shape() == dst.shape() => {
                        *dst = (*t).clone();
                        self.used += 1;
                    }
                    Some(t) => {
                        self.err = Some(Error::shape(format!(
                            "tensor {name}: stored {:?}, model {:?}",
                            t.shape(),
                            dst.shape()
                        )))
                    }
                    None => self.err = Some(Error::invalid(format!("tensor {name} missing"))),
                }
            }
        }
        impl<T: Element> Visitor<T> for Load<'_, T> {
            fn param(&mut self, name: &str, p: &mut Param<T>) {
                self.take(name, &mut p.value);
            }
            fn buffer(&mut self, name: &str, t: &mut Tensor<T>) {
                self.take(name, t);
            }
        }
        let mut l = Load {
            src: tensors.iter().map(|(n, t)| (n.as_str(), t)).collect(),
            err: None,
            used: 0,
        };
        self.visit(&mut l);
        if let Some(e) = l.err {
            return Err(e);
        }
        if l.used != tensors.len() {
            return Err(Error::invalid(format!(
                "{} stored tensors do not belong to this model",
                tensors.len() - l.used
            )));
        }
        Ok(())
    }

    /// Copies all tensors into a model of another precision.
    pub fn cast<U: Element>(&mut self) -> Result<Model<U>> {
        let mut rng = <SeededRng as rand::SeedableRng>::seed_from_u64(0);
        let mut m = Model::<U>::new(&self.spec, &mut rng)?;
        let named: Vec<(String, Tensor<U>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast()))
            .collect();
        m.load_named_tensors(&named)?;
        Ok(m)
    }
}
