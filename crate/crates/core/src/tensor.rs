//! Dense row-major n-dimensional arrays.
//!
//! `Tensor<T>` is generic over [`Element`], implemented for `f32` (the
//! training precision) and `f64` (used by the finite-difference gradient
//! checks). All public operations allocate a fresh output and leave their
//! inputs untouched; results containing NaN or infinity are reported as
//! [`Error::NonFinite`].

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type a tensor can hold.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    const NAME: &'static str;

    /// `c <- alpha * a * b + beta * c` for strided matrices.
    ///
    /// # Safety
    /// Every index reachable through the given dims and strides must lie
    /// inside the corresponding buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every element type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("element converts to f64")
    }
}

impl Element for f32 {
    const NAME: &'static str = "f32";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Element for f64 {
    const NAME: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Orientation of a matrix operand passed to [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// Safe wrapper over the strided gemm kernel for contiguous row-major
/// operands: `c <- alpha * op(a) * op(b) + beta * c`, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    ta: Trans,
    b: &[T],
    tb: Trans,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too small");
    assert!(b.len() >= k * n, "gemm: rhs buffer too small");
    assert!(c.len() >= m * n, "gemm: output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Binary elementwise operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiply by the right operand; normally used with a scalar.
    Scale,
}

/// Right-hand operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
    Min,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Returns a tensor with the same data under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    /// Converts every element to another precision.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(self, what: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(ElementwiseOp::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(ElementwiseOp::Sub, self, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(ElementwiseOp::Mul, self, Operand::Tensor(other))
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        elementwise(ElementwiseOp::Scale, self, Operand::Scalar(factor))
    }

    pub fn sum_all(&self) -> T {
        T::from_f64_lossy(self.data.iter().map(|v| v.as_f64()).sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }
}

/// Applies `op` element by element. A scalar operand is broadcast.
pub fn elementwise<T: Element>(
    op: ElementwiseOp,
    a: &Tensor<T>,
    b: Operand<'_, T>,
) -> Result<Tensor<T>> {
    let f = |x: T, y: T| match op {
        ElementwiseOp::Add => x + y,
        ElementwiseOp::Sub => x - y,
        ElementwiseOp::Mul | ElementwiseOp::Scale => x * y,
    };
    let data: Vec<T> = match b {
        Operand::Tensor(b) => {
            if a.shape != b.shape {
                return Err(Error::shape(format!(
                    "elementwise {op:?}: {:?} vs {:?}",
                    a.shape, b.shape
                )));
            }
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
        }
        Operand::Scalar(s) => a.data.iter().map(|&x| f(x, s)).collect(),
    };
    Tensor {
        shape: a.shape.clone(),
        data,
    }
    .check_finite("elementwise")
}

/// Reduces over the given axes, removing them from the shape. Reducing every
/// axis yields a one-element tensor of shape `[1]`.
///
/// Sums accumulate in f64 in row-major order of the reduced indices, so the
/// result is deterministic and accurate for f32 inputs.
pub fn reduce<T: Element>(op: ReduceOp, t: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    if t.is_empty() {
        return Err(Error::Empty("reduce".into()));
    }
    let nd = t.ndim();
    let mut reduced = vec![false; nd];
    for &ax in axes {
        if ax >= nd {
            return Err(Error::invalid(format!("axis {ax} out of range for {nd}-d tensor")));
        }
        reduced[ax] = true;
    }
    let out_shape: Vec<usize> = (0..nd).filter(|&i| !reduced[i]).map(|i| t.shape[i]).collect();
    let red_shape: Vec<usize> = (0..nd).filter(|&i| reduced[i]).map(|i| t.shape[i]).collect();
    let out_len: usize = out_shape.iter().product();
    let red_len: usize = red_shape.iter().product();

    let mut strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * t.shape[i + 1];
    }
    let kept_axes: Vec<usize> = (0..nd).filter(|&i| !reduced[i]).collect();
    let red_axes: Vec<usize> = (0..nd).filter(|&i| reduced[i]).collect();

    let offset_of = |mut flat: usize, axes: &[usize], dims: &[usize]| -> usize {
        let mut off = 0;
        for (pos, &ax) in axes.iter().enumerate().rev() {
            let idx = flat % dims[pos];
            flat /= dims[pos];
            off += idx * strides[ax];
        }
        off
    };

    let mut out = Vec::with_capacity(out_len);
    for o in 0..out_len {
        let base = offset_of(o, &kept_axes, &out_shape);
        let value = match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                let mut acc = 0.0f64;
                for r in 0..red_len {
                    acc += t.data[base + offset_of(r, &red_axes, &red_shape)].as_f64();
                }
                if op == ReduceOp::Mean {
                    acc /= red_len as f64;
                }
                T::from_f64_lossy(acc)
            }
            ReduceOp::Max | ReduceOp::Min => {
                let mut acc = t.data[base + offset_of(0, &red_axes, &red_shape)];
                for r in 1..red_len {
                    let v = t.data[base + offset_of(r, &red_axes, &red_shape)];
                    acc = if op == ReduceOp::Max { acc.max(v) } else { acc.min(v) };
                }
                acc
            }
        };
        out.push(value);
    }
    let shape = if out_shape.is_empty() { vec![1] } else { out_shape };
    Tensor { shape, data: out }.check_finite("reduce")
}

/// Matrix product of `[m, k]` and `[k, n]` tensors.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::shape(format!(
            "matmul {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    gemm(m, k, n, T::one(), &a.data, Trans::No, &b.data, Trans::No, T::zero(), &mut out);
    Tensor {
        shape: vec![m, n],
        data: out,
    }
    .check_finite("matmul")
}
