//! Pre-activation bottleneck residual block.
//!
//! Residual branch: BN -> ReLU -> 1x1 conv (reduce), BN -> ReLU -> 3x3 conv
//! (carries the block stride), BN -> ReLU -> 1x1 conv (expand). The output is
//! `branch(x) + shortcut(x)`, where the shortcut is the identity when input
//! and output shapes agree and a strided 1x1 projection otherwise.

use super::layers::{BatchNorm2d, Conv2d, Relu, Visitor};
use super::ops::{BatchNormConfig, Mode};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub enum Shortcut<T> {
    Identity,
    Projection(Conv2d<T>),
}

#[derive(Debug, Clone)]
pub struct Bottleneck<T> {
    pub bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    pub conv1: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    relu2: Relu<T>,
    pub conv2: Conv2d<T>,
    pub bn3: BatchNorm2d<T>,
    relu3: Relu<T>,
    pub conv3: Conv2d<T>,
    pub shortcut: Shortcut<T>,
}

impl<T: Element> Bottleneck<T> {
    pub fn new(
        in_ch: usize,
        mid_ch: usize,
        out_ch: usize,
        stride: usize,
        bn: BatchNormConfig,
        rng: &mut SeededRng,
    ) -> Self {
        let conv1 = Conv2d::new(in_ch, mid_ch, 1, 1, 0, rng);
        let conv2 = Conv2d::new(mid_ch, mid_ch, 3, stride, 1, rng);
        let conv3 = Conv2d::new(mid_ch, out_ch, 1, 1, 0, rng);
        let shortcut = if in_ch != out_ch || stride != 1 {
            Shortcut::Projection(Conv2d::new(in_ch, out_ch, 1, stride, 0, rng))
        } else {
            Shortcut::Identity
        };
        Self::from_parts(conv1, conv2, conv3, shortcut, bn).expect("consistent construction")
    }

    /// Assembles a block from explicit convolutions, validating that the
    /// shortcut produces the same shape as the residual branch.
    pub fn from_parts(
        conv1: Conv2d<T>,
        conv2: Conv2d<T>,
        conv3: Conv2d<T>,
        shortcut: Shortcut<T>,
        bn: BatchNormConfig,
    ) -> Result<Self> {
        let in_ch = conv1.in_channels();
        let out_ch = conv3.out_channels();
        if conv1.out_channels() != conv2.in_channels() || conv2.out_channels() != conv3.in_channels() {
            return Err(Error::shape("bottleneck convolutions do not chain"));
        }
        let stride = conv2.stride;
        match &shortcut {
            Shortcut::Identity if in_ch != out_ch || stride != 1 => {
                return Err(Error::shape(format!(
                    "identity shortcut cannot map {in_ch} channels (stride {stride}) to {out_ch}"
                )))
            }
            Shortcut::Projection(p)
                if p.in_channels() != in_ch || p.out_channels() != out_ch || p.stride != stride =>
            {
                return Err(Error::shape("projection shortcut does not match the residual branch"))
            }
            _ => {}
        }
        Ok(Self {
            bn1: BatchNorm2d::new(in_ch, bn),
            relu1: Relu::new(),
            bn2: BatchNorm2d::new(conv1.out_channels(), bn),
            relu2: Relu::new(),
            bn3: BatchNorm2d::new(conv2.out_channels(), bn),
            relu3: Relu::new(),
            conv1,
            conv2,
            conv3,
            shortcut,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv3.out_channels()
    }

    pub fn has_projection(&self) -> bool {
        matches!(self.shortcut, Shortcut::Projection(_))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.bn1.forward(x, mode)?;
        let h = self.relu1.forward(&h);
        let h = self.conv1.forward(&h)?;
        let h = self.bn2.forward(&h, mode)?;
        let h = self.relu2.forward(&h);
        let h = self.conv2.forward(&h)?;
        let h = self.bn3.forward(&h, mode)?;
        let h = self.relu3.forward(&h);
        let branch = self.conv3.forward(&h)?;
        let skip = match &mut self.shortcut {
            Shortcut::Identity => x.clone(),
            Shortcut::Projection(p) => p.forward(x)?,
        };
        if branch.shape() != skip.shape() {
            return Err(Error::shape(format!(
                "residual branch {:?} vs shortcut {:?}",
                branch.shape(),
                skip.shape()
            )));
        }
        add_unchecked(branch, &skip)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.conv3.backward(grad_out)?;
        let g = self.relu3.backward(&g)?;
        let g = self.bn3.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu2.backward(&g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv1.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g_branch = self.bn1.backward(&g)?;
        let g_skip = match &mut self.shortcut {
            Shortcut::Identity => grad_out.clone(),
            Shortcut::Projection(p) => p.backward(grad_out)?,
        };
        add_unchecked(g_branch, &g_skip)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.bn1.visit(&format!("{prefix}.bn1"), v);
        self.conv1.visit(&format!("{prefix}.conv1"), v);
        self.bn2.visit(&format!("{prefix}.bn2"), v);
        self.conv2.visit(&format!("{prefix}.conv2"), v);
        self.bn3.visit(&format!("{prefix}.bn3"), v);
        self.conv3.visit(&format!("{prefix}.conv3"), v);
        if let Shortcut::Projection(p) = &mut self.shortcut {
            p.visit(&format!("{prefix}.shortcut"), v);
        }
    }

    /// Convolutions inside the residual branch (excludes the projection).
    pub fn branch_convs_mut(&mut self) -> [&mut Conv2d<T>; 3] {
        [&mut self.conv1, &mut self.conv2, &mut self.conv3]
    }
}

fn add_unchecked<T: Element>(mut a: Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x = *x + y;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn zero_branch<T: Element>(b: &mut Bottleneck<T>) {
        for c in b.branch_convs_mut() {
            c.weight.value.data_mut().fill(T::zero());
            c.bias.value.data_mut().fill(T::zero());
        }
    }

    #[test]
    fn zero_branch_identity_block_is_identity() {
        let mut rng = SeededRng::seed_from_u64(11);
        let mut block = Bottleneck::<f64>::new(8, 2, 8, 1, BatchNormConfig::default(), &mut rng);
        assert!(!block.has_projection());
        zero_branch(&mut block);
        let x = Tensor::from_fn(&[2, 8, 5, 5], |_| rng.gen_range(-3.0..3.0));
        let y = block.forward(&x, Mode::Train).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn projection_with_identity_embedding_pads_channels() {
        let mut rng = SeededRng::seed_from_u64(12);
        let mut block = Bottleneck::<f64>::new(2, 2, 4, 1, BatchNormConfig::default(), &mut rng);
        assert!(block.has_projection());
        zero_branch(&mut block);
        if let Shortcut::Projection(p) = &mut block.shortcut {
            let w = p.weight.value.data_mut();
            w.fill(0.0);
            // weight [4, 2, 1, 1]: out channel i <- in channel i for i < 2
            w[0] = 1.0;
            w[3] = 1.0;
        }
        let x = Tensor::from_fn(&[2, 2, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let y = block.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3, 3]);
        for s in 0..2 {
            for c in 0..4 {
                for i in 0..9 {
                    let got = y.data()[(s * 4 + c) * 9 + i];
                    let want = if c < 2 { x.data()[(s * 2 + c) * 9 + i] } else { 0.0 };
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn mismatched_identity_shortcut_is_rejected() {
        let mut rng = SeededRng::seed_from_u64(13);
        let c1 = Conv2d::<f32>::new(4, 2, 1, 1, 0, &mut rng);
        let c2 = Conv2d::new(2, 2, 3, 1, 1, &mut rng);
        let c3 = Conv2d::new(2, 8, 1, 1, 0, &mut rng);
        let r = Bottleneck::from_parts(c1, c2, c3, Shortcut::Identity, BatchNormConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn strided_block_halves_resolution() {
        let mut rng = SeededRng::seed_from_u64(14);
        let mut block = Bottleneck::<f32>::new(4, 2, 8, 2, BatchNormConfig::default(), &mut rng);
        let x = Tensor::from_fn(&[2, 4, 14, 14], |_| rng.gen_range(-1.0..1.0));
        let y = block.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 8, 7, 7]);
    }
}
