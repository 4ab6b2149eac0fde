use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::scheduler::{PlateauConfig, PlateauScheduler};
use super::sgd::{Sgd, SgdConfig};
use crate::data::SliceSet;
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::nn::ops::{bce_loss, softmax_bce_logit_grad};
use crate::nn::{Checkpoint, Mode, Model, ModelSpec};
use crate::rng::{rng_for, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub plateau: PlateauConfig,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Per-class loss weights `[negative, positive]`; plain BCE when `None`.
    pub class_weights: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            momentum: 0.9,
            weight_decay: 1e-6,
            batch_size: 8,
            plateau: PlateauConfig::default(),
            min_lr: 1e-6,
            max_epochs: 100,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for batch normalisation".into()));
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return Err(Error::Config("lr factor must lie in (0, 1)".into()));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Config("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Undefined when the validation set holds a single class.
    pub val_auc: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss (the initial
    /// weights when no epoch ran).
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
}

/// `epoch,train_loss,val_loss,val_auc,lr`; an undefined AUC is left empty.
pub fn metrics_to_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_auc,lr\n");
    for m in metrics {
        let auc = m.val_auc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{},{}", m.epoch, m.train_loss, m.val_loss, auc, m.lr).expect("string write");
    }
    s
}

const EVAL_BATCH: usize = 32;

/// Positive-class probability of every slice, in eval mode.
pub fn predict(model: &mut Model<f32>, set: &SliceSet) -> Result<Vec<f64>> {
    let mut rng = rng_for(0, Stream::Dropout, 0);
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let probs = model.forward(&set.batch(chunk), Mode::Eval, &mut rng)?;
        out.extend(probs.data().chunks(2).map(|r| r[1] as f64));
    }
    Ok(out)
}

fn mean_bce(p1: &[f64], labels: &[u8], class_weights: Option<[f64; 2]>) -> Result<f64> {
    let rows: Vec<f64> = p1.iter().flat_map(|&p| [1.0 - p, p]).collect();
    let probs = Tensor::new(vec![p1.len(), 2], rows)?;
    Ok(bce_loss(&probs, labels, class_weights)?.0)
}

/// Trains one network from a seeded initialisation and keeps the weights
/// with the best validation loss.
pub fn train(spec: &ModelSpec, train_set: &SliceSet, val_set: &SliceSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_ids: HashSet<&str> = train_set.patients.iter().map(|p| p.0.as_str()).collect();
    if let Some((id, _)) = val_set.patients.iter().find(|p| train_ids.contains(p.0.as_str())) {
        return Err(Error::invalid(format!("patient {id} is in both training and validation sets")));
    }
    if train_set.len() < 2 {
        return Err(Error::Empty("training set needs at least 2 slices".into()));
    }

    let mut model = Model::<f32>::new(spec, &mut rng_for(cfg.seed, Stream::Init, 0))?;
    let mut sgd = Sgd::new(
        &mut model,
        SgdConfig {
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        },
    );
    let mut sched = PlateauScheduler::new(cfg.lr0, cfg.plateau);
    let mut best = (f64::INFINITY, 0usize, Checkpoint::from_model(&mut model));
    let mut metrics = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        if lr < cfg.min_lr {
            break;
        }
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut drop_rng = rng_for(cfg.seed, Stream::Dropout, epoch as u64);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // batch statistics are undefined for a single sample
            if chunk.len() < 2 {
                continue;
            }
            let labels = train_set.batch_labels(chunk);
            let probs = model.forward(&train_set.batch(chunk), Mode::Train, &mut drop_rng)?;
            let (loss, _) = bce_loss(&probs, &labels, cfg.class_weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            let grad = softmax_bce_logit_grad(&probs, &labels, cfg.class_weights)?;
            model.zero_grad();
            model.backward_from_logits(&grad)?;
            sgd.step(&mut model, lr)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }

        let val_p = predict(&mut model, val_set)?;
        let val_loss = mean_bce(&val_p, &val_set.labels, cfg.class_weights)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let val_auc = auc(&val_p, &val_set.labels).ok();
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_auc,
            lr,
        };
        log::info!(
            "epoch {epoch}: train_loss {:.5} val_loss {:.5} val_auc {} lr {lr:e}",
            m.train_loss,
            m.val_loss,
            val_auc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        if val_loss < best.0 {
            best = (val_loss, epoch, Checkpoint::from_model(&mut model));
        }
        metrics.push(m);
        sched.step(val_loss);
    }

    Ok(TrainOutcome {
        checkpoint: best.2,
        metrics,
        best_epoch: best.1,
    })
}
