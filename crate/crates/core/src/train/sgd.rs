//! Stochastic gradient descent with heavy-ball momentum and coupled L2
//! weight decay:
//!
//! ```text
//! v <- momentum * v - lr * (g + weight_decay * w)
//! w <- w + v
//! ```

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One update of a flat parameter slice. Fails without touching anything if
/// any gradient is non-finite.
pub fn sgd_step<T: Element>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: f64,
    cfg: SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(format!(
            "sgd: {} params, {} grads, {} velocity entries",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let m = T::from_f64_lossy(cfg.momentum);
    let wd = T::from_f64_lossy(cfg.weight_decay);
    let lr = T::from_f64_lossy(lr);
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = m * *v - lr * (g + wd * *w);
        *w = *w + *v;
    }
    Ok(())
}

/// Momentum buffers for every parameter of a model, in visiting order.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub cfg: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Element> Sgd<T> {
    pub fn new(model: &mut Model<T>, cfg: SgdConfig) -> Self {
        let mut velocity = Vec::new();
        model.for_each_param(|_, p| velocity.push(vec![T::zero(); p.value.len()]));
        Self { cfg, velocity }
    }

    /// Applies the accumulated gradients. Gradients are checked before any
    /// parameter is modified.
    pub fn step(&mut self, model: &mut Model<T>, lr: f64) -> Result<()> {
        let mut bad = None;
        model.for_each_param(|name, p| {
            if bad.is_none() && p.grad.data().iter().any(|g| !g.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        let cfg = self.cfg;
        let mut idx = 0;
        let mut result = Ok(());
        let velocity = &mut self.velocity;
        model.for_each_param(|_, p| {
            if result.is_ok() {
                let (value, grad) = (&mut p.value, &p.grad);
                result = sgd_step(value.data_mut(), grad.data(), &mut velocity[idx], lr, cfg);
            }
            idx += 1;
        });
        result
    }
}
