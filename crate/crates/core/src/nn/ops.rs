//! Stateless forward/backward kernels on `[N, C, H, W]` (or `[N, F]`) tensors.
//!
//! Each forward returns its output together with the cache its backward
//! needs. The layer wrappers in [`super::layers`] own parameters and keep the
//! cache between calls.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor, Trans};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn dims4<T: Element>(x: &Tensor<T>, what: &str) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::shape(format!("{what} expects [N, C, H, W], got {s:?}"))),
    }
}

/// Output extent of a sliding window: `floor((len + 2 pad - k) / stride) + 1`.
pub fn out_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::invalid("kernel and stride must be positive"));
    }
    if len + 2 * pad < kernel {
        return Err(Error::shape(format!(
            "window {kernel} larger than padded extent {}",
            len + 2 * pad
        )));
    }
    Ok((len + 2 * pad - kernel) / stride + 1)
}

// ---------------------------------------------------------------------------
// convolution

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input_shape: [usize; 4],
    out_hw: (usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
    /// im2col matrices, one `[C*k*k, Ho*Wo]` block per sample.
    cols: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Tensor<T>,
    pub grad_b: Tensor<T>,
}

fn is_pointwise(kernel: usize, stride: usize, pad: usize) -> bool {
    kernel == 1 && stride == 1 && pad == 0
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Element>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let p = ho * wo;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    let line = &mut dst[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, out) in line.iter_mut().enumerate() {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        *out = if iw < 0 || iw >= w as isize {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Element>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    let p = ho * wo;
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let base = ih as usize * w;
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        if iw >= 0 && iw < w as isize {
                            plane[base + iw as usize] = plane[base + iw as usize] + src[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation. `w` is `[Cout, Cin, k, k]`, `b` is `[Cout]`.
pub fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let [n, c, h, wd] = dims4(x, "conv2d")?;
    let (cout, k) = match *w.shape() {
        [co, ci, kh, kw] if ci == c && kh == kw => (co, kh),
        ref s => {
            return Err(Error::shape(format!(
                "conv2d weight {s:?} incompatible with input {:?}",
                x.shape()
            )))
        }
    };
    if b.shape() != [cout] {
        return Err(Error::shape(format!("conv2d bias {:?}, expected [{cout}]", b.shape())));
    }
    let ho = out_extent(h, k, stride, pad)?;
    let wo = out_extent(wd, k, stride, pad)?;
    let p = ho * wo;
    let ckk = c * k * k;
    let pointwise = is_pointwise(k, stride, pad);

    let cols = if pointwise {
        x.data().to_vec()
    } else {
        let mut cols = vec![T::zero(); n * ckk * p];
        for s in 0..n {
            im2col(
                &x.data()[s * c * h * wd..(s + 1) * c * h * wd],
                c,
                h,
                wd,
                k,
                stride,
                pad,
                ho,
                wo,
                &mut cols[s * ckk * p..(s + 1) * ckk * p],
            );
        }
        cols
    };

    let mut out = vec![T::zero(); n * cout * p];
    for s in 0..n {
        let o = &mut out[s * cout * p..(s + 1) * cout * p];
        for (co, row) in o.chunks_mut(p).enumerate() {
            row.fill(b.data()[co]);
        }
        gemm(
            cout,
            ckk,
            p,
            T::one(),
            w.data(),
            Trans::No,
            &cols[s * ckk * p..(s + 1) * ckk * p],
            Trans::No,
            T::one(),
            o,
        );
    }
    let y = Tensor::new(vec![n, cout, ho, wo], out)?;
    Ok((
        y,
        ConvCache {
            input_shape: [n, c, h, wd],
            out_hw: (ho, wo),
            kernel: k,
            stride,
            pad,
            cols,
        },
    ))
}

pub fn conv2d_backward<T: Element>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
    w: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let [n, c, h, wd] = cache.input_shape;
    let (ho, wo) = cache.out_hw;
    let k = cache.kernel;
    let cout = w.shape()[0];
    if grad_out.shape() != [n, cout, ho, wo] || w.shape() != [cout, c, k, k] {
        return Err(Error::shape(format!(
            "conv2d backward: grad {:?} / weight {:?} do not match cached forward",
            grad_out.shape(),
            w.shape()
        )));
    }
    let p = ho * wo;
    let ckk = c * k * k;
    let pointwise = is_pointwise(k, cache.stride, cache.pad);

    let mut gw = vec![T::zero(); cout * ckk];
    let mut gb = vec![T::zero(); cout];
    let mut gx = vec![T::zero(); n * c * h * wd];
    let mut dcols = vec![T::zero(); ckk * p];
    for s in 0..n {
        let g = &grad_out.data()[s * cout * p..(s + 1) * cout * p];
        let cols = &cache.cols[s * ckk * p..(s + 1) * ckk * p];
        gemm(cout, p, ckk, T::one(), g, Trans::No, cols, Trans::Yes, T::one(), &mut gw);
        for (co, row) in g.chunks(p).enumerate() {
            gb[co] = gb[co] + row.iter().copied().sum::<T>();
        }
        let gxs = &mut gx[s * c * h * wd..(s + 1) * c * h * wd];
        if pointwise {
            gemm(ckk, cout, p, T::one(), w.data(), Trans::Yes, g, Trans::No, T::zero(), gxs);
        } else {
            gemm(ckk, cout, p, T::one(), w.data(), Trans::Yes, g, Trans::No, T::zero(), &mut dcols);
            col2im(&dcols, c, h, wd, k, cache.stride, cache.pad, ho, wo, gxs);
        }
    }
    Ok(ConvGrads {
        grad_x: Tensor::new(vec![n, c, h, wd], gx)?,
        grad_w: Tensor::new(w.shape().to_vec(), gw)?,
        grad_b: Tensor::new(vec![cout], gb)?,
    })
}

// ---------------------------------------------------------------------------
// batch normalization

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    mode: Mode,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: [usize; 4],
}

pub struct BatchNormGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
}

/// Per-channel normalization. In train mode the batch statistics are used
/// and the running statistics are updated in place
/// (`running <- (1 - momentum) * running + momentum * batch`, unbiased
/// variance); in eval mode the running statistics are used.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d_forward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    cfg: BatchNormConfig,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let [n, c, h, w] = dims4(x, "batchnorm2d")?;
    for (name, t) in [
        ("gamma", &*gamma),
        ("beta", &*beta),
        ("running_mean", &*running_mean),
        ("running_var", &*running_var),
    ] {
        if t.shape() != [c] {
            return Err(Error::shape(format!("batchnorm {name} {:?}, expected [{c}]", t.shape())));
        }
    }
    if mode == Mode::Train && n < 2 {
        return Err(Error::invalid("batchnorm in train mode needs a batch of at least 2"));
    }
    let hw = h * w;
    let m = n * hw;
    let xd = x.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mut acc = 0.0;
                for s in 0..n {
                    let base = (s * c + ch) * hw;
                    acc += xd[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                mean[ch] = acc / m as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    let base = (s * c + ch) * hw;
                    sq += xd[base..base + hw]
                        .iter()
                        .map(|v| (v.as_f64() - mean[ch]).powi(2))
                        .sum::<f64>();
                }
                var[ch] = sq / m as f64;
            }
            let mom = cfg.momentum;
            let unbias = m as f64 / (m as f64 - 1.0);
            for ch in 0..c {
                let rm = running_mean.data()[ch].as_f64();
                let rv = running_var.data()[ch].as_f64();
                running_mean.data_mut()[ch] = T::from_f64_lossy((1.0 - mom) * rm + mom * mean[ch]);
                running_var.data_mut()[ch] =
                    T::from_f64_lossy((1.0 - mom) * rv + mom * var[ch] * unbias);
            }
        }
        Mode::Eval => {
            for ch in 0..c {
                mean[ch] = running_mean.data()[ch].as_f64();
                var[ch] = running_var.data()[ch].as_f64();
            }
        }
    }
    let inv_std: Vec<T> = var
        .iter()
        .map(|v| T::from_f64_lossy(1.0 / (v + cfg.eps).sqrt()))
        .collect();
    let mean_t: Vec<T> = mean.iter().map(|&v| T::from_f64_lossy(v)).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = vec![T::zero(); xd.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for i in base..base + hw {
                let xh = (xd[i] - mean_t[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = g * xh + b;
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, h, w], out)?,
        BatchNormCache {
            mode,
            xhat,
            inv_std,
            shape: [n, c, h, w],
        },
    ))
}

pub fn batchnorm2d_backward<T: Element>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let [n, c, h, w] = cache.shape;
    if grad_out.shape() != cache.shape {
        return Err(Error::shape(format!(
            "batchnorm backward: grad {:?} vs cached {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let hw = h * w;
    let m = T::from_usize(n * hw).expect("batch size fits");
    let g = grad_out.data();
    let mut ggamma = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                gbeta[ch] = gbeta[ch] + g[i];
                ggamma[ch] = ggamma[ch] + g[i] * cache.xhat[i];
            }
        }
    }
    let mut gx = vec![T::zero(); g.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            let scale = gamma.data()[ch] * cache.inv_std[ch];
            for i in base..base + hw {
                gx[i] = match cache.mode {
                    Mode::Train => {
                        scale / m * (m * g[i] - gbeta[ch] - cache.xhat[i] * ggamma[ch])
                    }
                    Mode::Eval => scale * g[i],
                };
            }
        }
    }
    Ok(BatchNormGrads {
        grad_x: Tensor::new(vec![n, c, h, w], gx)?,
        grad_gamma: Tensor::new(vec![c], ggamma)?,
        grad_beta: Tensor::new(vec![c], gbeta)?,
    })
}

// ---------------------------------------------------------------------------
// activations, pooling, dropout

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Gradient of relu given the forward *input*.
pub fn relu_backward<T: Element>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(Error::shape("relu backward shape mismatch"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolConfig {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: [usize; 4],
    /// Flat input index of the winning element for each output element.
    argmax: Vec<usize>,
}

/// Max pooling; padded positions never win. Ties go to the first element in
/// row-major window order.
pub fn maxpool2d_forward<T: Element>(
    x: &Tensor<T>,
    cfg: PoolConfig,
) -> Result<(Tensor<T>, MaxPoolCache)> {
    let [n, c, h, w] = dims4(x, "maxpool2d")?;
    if cfg.pad > cfg.kernel / 2 {
        return Err(Error::invalid("maxpool padding must be smaller than half the kernel"));
    }
    let ho = out_extent(h, cfg.kernel, cfg.stride, cfg.pad)?;
    let wo = out_extent(w, cfg.kernel, cfg.stride, cfg.pad)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut best: Option<(T, usize)> = None;
                for ki in 0..cfg.kernel {
                    let ih = (oh * cfg.stride + ki) as isize - cfg.pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for kj in 0..cfg.kernel {
                        let iw = (ow * cfg.stride + kj) as isize - cfg.pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        let idx = base + ih as usize * w + iw as usize;
                        match best {
                            Some((v, _)) if xd[idx] <= v => {}
                            _ => best = Some((xd[idx], idx)),
                        }
                    }
                }
                let (v, idx) = best.expect("window overlaps the input");
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, ho, wo], out)?,
        MaxPoolCache {
            input_shape: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2d_backward<T: Element>(grad_out: &Tensor<T>, cache: &MaxPoolCache) -> Result<Tensor<T>> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape("maxpool backward shape mismatch"));
    }
    let mut gx = vec![T::zero(); cache.input_shape.iter().product()];
    for (&g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
        gx[idx] = gx[idx] + g;
    }
    Tensor::new(cache.input_shape.to_vec(), gx)
}

/// Average pooling without padding.
pub fn avgpool2d_forward<T: Element>(x: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(x, "avgpool2d")?;
    let ho = out_extent(h, kernel, stride, 0)?;
    let wo = out_extent(w, kernel, stride, 0)?;
    let area = T::from_usize(kernel * kernel).expect("kernel area");
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = T::zero();
                for ki in 0..kernel {
                    let row = base + (oh * stride + ki) * w + ow * stride;
                    for v in &xd[row..row + kernel] {
                        acc = acc + *v;
                    }
                }
                out.push(acc / area);
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out)
}

pub fn avgpool2d_backward<T: Element>(
    grad_out: &Tensor<T>,
    input_shape: [usize; 4],
    kernel: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    let ho = out_extent(h, kernel, stride, 0)?;
    let wo = out_extent(w, kernel, stride, 0)?;
    if grad_out.shape() != [n, c, ho, wo] {
        return Err(Error::shape("avgpool backward shape mismatch"));
    }
    let area = T::from_usize(kernel * kernel).expect("kernel area");
    let mut gx = vec![T::zero(); n * c * h * w];
    let g = grad_out.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let share = g[(plane * ho + oh) * wo + ow] / area;
                for ki in 0..kernel {
                    let row = base + (oh * stride + ki) * w + ow * stride;
                    for v in &mut gx[row..row + kernel] {
                        *v = *v + share;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gx)
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 - p)`. Returns the output and the
/// applied multiplier mask (`None` when the layer is the identity).
pub fn dropout_forward<T: Element, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Element>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) if m.len() == grad_out.len() => {
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::new(grad_out.shape().to_vec(), data)
        }
        Some(_) => Err(Error::shape("dropout backward mask length mismatch")),
    }
}

// ---------------------------------------------------------------------------
// fully connected, softmax, loss

fn rows_cols<T: Element>(x: &Tensor<T>) -> Result<(usize, usize)> {
    if x.ndim() < 2 {
        return Err(Error::shape(format!("expected a batch, got {:?}", x.shape())));
    }
    let n = x.shape()[0];
    Ok((n, x.len() / n))
}

/// `y = x W^T + b`; `x` is flattened to `[N, in]`, `W` is `[out, in]`.
pub fn linear_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, fin) = rows_cols(x)?;
    let (fout, win) = match *w.shape() {
        [o, i] => (o, i),
        ref s => return Err(Error::shape(format!("linear weight {s:?}"))),
    };
    if win != fin || b.shape() != [fout] {
        return Err(Error::shape(format!(
            "linear {:?} with weight {:?} and bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * fout);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    gemm(n, fin, fout, T::one(), x.data(), Trans::No, w.data(), Trans::Yes, T::one(), &mut out);
    Tensor::new(vec![n, fout], out)
}

pub struct LinearGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Tensor<T>,
    pub grad_b: Tensor<T>,
}

pub fn linear_backward<T: Element>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, fin) = rows_cols(x)?;
    let fout = w.shape()[0];
    if grad_out.shape() != [n, fout] {
        return Err(Error::shape("linear backward shape mismatch"));
    }
    let g = grad_out.data();
    let mut gw = vec![T::zero(); fout * fin];
    gemm(fout, n, fin, T::one(), g, Trans::Yes, x.data(), Trans::No, T::zero(), &mut gw);
    let mut gb = vec![T::zero(); fout];
    for row in g.chunks(fout) {
        for (acc, &v) in gb.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    let mut gx = vec![T::zero(); n * fin];
    gemm(n, fout, fin, T::one(), g, Trans::No, w.data(), Trans::No, T::zero(), &mut gx);
    Ok(LinearGrads {
        grad_x: Tensor::new(x.shape().to_vec(), gx)?,
        grad_w: Tensor::new(w.shape().to_vec(), gw)?,
        grad_b: Tensor::new(vec![fout], gb)?,
    })
}

/// Row-wise softmax over `[N, K]`.
pub fn softmax_forward<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = rows_cols(logits)?;
    let mut out = Vec::with_capacity(n * k);
    for row in logits.data().chunks(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::new(vec![n, k], out)?.check_finite("softmax")
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward<T: Element>(grad_out: &Tensor<T>, probs: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != probs.shape() {
        return Err(Error::shape("softmax backward shape mismatch"));
    }
    let k = probs.shape()[1];
    let mut out = Vec::with_capacity(probs.len());
    for (g, p) in grad_out.data().chunks(k).zip(probs.data().chunks(k)) {
        let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
        out.extend(g.iter().zip(p).map(|(&gi, &pi)| pi * (gi - dot)));
    }
    Tensor::new(probs.shape().to_vec(), out)
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::InvalidLabels(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidLabels(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Binary cross-entropy over two-column probability rows: the weighted mean
/// of `-ln p[label]`. `class_weights` defaults to `[1, 1]`. Returns the loss
/// and its gradient with respect to `probs`.
pub fn bce_loss<T: Element>(
    probs: &Tensor<T>,
    labels: &[u8],
    class_weights: Option<[f64; 2]>,
) -> Result<(f64, Tensor<T>)> {
    let (n, k) = rows_cols(probs)?;
    if k != 2 {
        return Err(Error::shape(format!("bce expects [N, 2], got {:?}", probs.shape())));
    }
    check_labels(labels, n)?;
    let cw = class_weights.unwrap_or([1.0, 1.0]);
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); n * 2];
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.data()[i * 2 + y as usize].as_f64();
        let clamped = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let wgt = cw[y as usize];
        loss -= wgt * clamped.ln();
        if clamped == p {
            grad[i * 2 + y as usize] = T::from_f64_lossy(-wgt / (p * n as f64));
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, 2], grad)?))
}

/// Gradient of [`bce_loss`] with respect to the softmax logits, computed in
/// the fused form `w_y (p - onehot(y)) / N` which stays informative when a
/// probability saturates.
pub fn softmax_bce_logit_grad<T: Element>(
    probs: &Tensor<T>,
    labels: &[u8],
    class_weights: Option<[f64; 2]>,
) -> Result<Tensor<T>> {
    let (n, k) = rows_cols(probs)?;
    if k != 2 {
        return Err(Error::shape("fused bce expects [N, 2]"));
    }
    check_labels(labels, n)?;
    let cw = class_weights.unwrap_or([1.0, 1.0]);
    let mut grad = Vec::with_capacity(n * 2);
    for (i, &y) in labels.iter().enumerate() {
        let scale = T::from_f64_lossy(cw[y as usize] / n as f64);
        for c in 0..2 {
            let onehot = if c == y as usize { T::one() } else { T::zero() };
            grad.push(scale * (probs.data()[i * 2 + c] - onehot));
        }
    }
    Tensor::new(vec![n, 2], grad)
}
