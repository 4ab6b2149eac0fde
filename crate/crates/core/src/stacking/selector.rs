//! Feature ranking by bagged-tree Gini importance, and cross-validated choice
//! of how many top-ranked features to keep.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::forest::{check_xy, need_both_classes, Forest, ForestConfig};
use super::tree::{Tree, TreeConfig};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub k: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            k: 26,
            n_trees: 100,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Top-`k` feature indices, most important first.
    pub features: Vec<usize>,
    /// Mean normalised impurity decrease of every input feature.
    pub importance: Vec<f64>,
}

impl Selection {
    /// `{"features": [...], "importance": [...]}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "features": self.features, "importance": self.importance }).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Raw {
            features: Vec<usize>,
            importance: Vec<f64>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::invalid(format!("selection file: {e}")))?;
        if raw.features.iter().any(|&f| f >= raw.importance.len()) {
            return Err(Error::invalid("selected feature index out of range"));
        }
        Ok(Self {
            features: raw.features,
            importance: raw.importance,
        })
    }
}

/// Ranks every feature by mean Gini importance over bagged trees (bootstrap
/// samples, all features considered at each split) and keeps the top `k`.
/// Features constant over the whole input rank last; remaining ties go to
/// the lower index.
pub fn select_features(x: &[Vec<f64>], y: &[u8], cfg: SelectorConfig, seed: u64) -> Result<Selection> {
    let p = check_xy(x, y)?;
    need_both_classes(y, 1)?;
    if cfg.k == 0 || cfg.k > p {
        return Err(Error::invalid(format!("cannot select {} of {p} features", cfg.k)));
    }
    if cfg.n_trees == 0 {
        return Err(Error::invalid("selector needs at least one tree"));
    }
    let n = x.len();
    let features: Vec<usize> = (0..p).collect();
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_leaf: 1,
        mtry: None,
    };
    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, Stream::Selector, t);
            let samples: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut imp = vec![0.0; p];
            Tree::fit(x, y, &samples, &features, tree_cfg, &mut rng, &mut imp);
            imp.iter().map(|v| v / n as f64).collect()
        })
        .collect();
    let mut importance = vec![0.0; p];
    for imp in &per_tree {
        for (a, v) in importance.iter_mut().zip(imp) {
            *a += v;
        }
    }
    for a in &mut importance {
        *a /= cfg.n_trees as f64;
    }
    let constant: Vec<bool> = (0..p).map(|j| x.iter().all(|r| r[j] == x[0][j])).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        constant[a]
            .cmp(&constant[b])
            .then(importance[b].total_cmp(&importance[a]))
            .then(a.cmp(&b))
    });
    order.truncate(cfg.k);
    Ok(Selection {
        features: order,
        importance,
    })
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng_for(seed, Stream::CrossVal, class as u64));
        for (j, &i) in idx.iter().enumerate() {
            fold[i] = j % folds;
        }
    }
    fold
}

/// Result of cross-validating the number of kept features.
#[derive(Debug, Clone, PartialEq)]
pub struct KTuning {
    pub best_k: usize,
    /// `(k, pooled out-of-fold AUC)` for every grid value tried.
    pub scores: Vec<(usize, f64)>,
    pub folds: usize,
}

/// Picks `k` from `grid` by pooled out-of-fold AUC of the select-then-forest
/// pipeline. The fold count is reduced to the smaller class size when needed.
/// Ties keep the earlier grid entry.
pub fn tune_k(
    x: &[Vec<f64>],
    y: &[u8],
    grid: &[usize],
    folds: usize,
    selector: SelectorConfig,
    forest: ForestConfig,
    seed: u64,
) -> Result<KTuning> {
    let p = check_xy(x, y)?;
    let pos = y.iter().filter(|&&l| l == 1).count();
    let min_class = pos.min(y.len() - pos);
    // each training fold needs two samples of each class for the forest
    let folds = folds.min(min_class);
    if folds < 2 || min_class < 3 {
        return Err(Error::InvalidLabels(format!(
            "cross-validation needs at least 3 samples per class, got {min_class}"
        )));
    }
    let grid: Vec<usize> = grid.iter().copied().filter(|&k| k >= 1 && k <= p).collect();
    if grid.is_empty() {
        return Err(Error::invalid("no feasible k in the tuning grid"));
    }
    let fold = stratified_folds(y, folds, seed);
    let mut scores = Vec::with_capacity(grid.len());
    for &k in &grid {
        let mut oof = vec![0.0; y.len()];
        for f in 0..folds {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let sel = select_features(&xt, &yt, SelectorConfig { k, ..selector }, seed.wrapping_add(f as u64))?;
            let model = Forest::train(&xt, &yt, &sel.features, forest, seed.wrapping_add(f as u64))?;
            for i in (0..y.len()).filter(|&i| fold[i] == f) {
                oof[i] = model.predict_proba(&x[i])?;
            }
        }
        scores.push((k, auc(&oof, y)?));
    }
    let best_k = scores
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((k, s)),
        })
        .expect("non-empty grid")
        .0;
    Ok(KTuning { best_k, scores, folds })
}
