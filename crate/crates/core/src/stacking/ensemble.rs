use rayon::prelude::*;

use super::features::{FeatureTable, FilterConfig};
use super::forest::{Forest, ForestConfig};
use super::selector::{select_features, tune_k, SelectorConfig, Selection};
use crate::data::SliceSet;
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::train::{train, TrainConfig, TrainOutcome};

/// Seed of ensemble member `index` (0-based).
pub fn member_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Trains `n_members` networks that differ only in their seeds. With
/// `threads > 1` members train concurrently; the results are the same as a
/// serial run.
pub fn ensemble_train(
    spec: &ModelSpec,
    train_set: &SliceSet,
    val_set: &SliceSet,
    cfg: &TrainConfig,
    n_members: usize,
    threads: usize,
) -> Result<Vec<TrainOutcome>> {
    if n_members == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    let run = |m: usize| {
        let member_cfg = TrainConfig {
            seed: member_seed(cfg.seed, m),
            ..cfg.clone()
        };
        log::info!("training member {} (seed {})", m + 1, member_cfg.seed);
        train(spec, train_set, val_set, &member_cfg).map_err(|e| Error::Member {
            member: m + 1,
            source: Box::new(e),
        })
    };
    if threads <= 1 {
        return (0..n_members).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..n_members).into_par_iter().map(run).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub filter: FilterConfig,
    pub selector: SelectorConfig,
    pub forest: ForestConfig,
    /// When set, `k` is chosen from this grid by cross-validation instead of
    /// taken from `selector.k`.
    pub k_grid: Option<Vec<usize>>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            selector: SelectorConfig::default(),
            forest: ForestConfig::default(),
            k_grid: None,
            cv_folds: 10,
            seed: 0,
        }
    }
}

/// Selected features plus the forest trained on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientClassifier {
    pub selection: Selection,
    pub forest: Forest,
}

/// Feature selection of the second stage. `k` comes from `k_grid` by
/// cross-validation when set, else from `selector.k`, and is capped at the
/// number of available features, so a single member's 18 features are all
/// kept.
pub fn select_for_stack(table: &FeatureTable, cfg: &StackConfig) -> Result<Selection> {
    let p = table.n_features();
    let k = match &cfg.k_grid {
        Some(grid) => {
            let t = tune_k(
                &table.rows,
                &table.labels,
                grid,
                cfg.cv_folds,
                cfg.selector,
                cfg.forest,
                cfg.seed,
            )?;
            log::info!("k tuned over {:?} with {} folds: {}", t.scores, t.folds, t.best_k);
            t.best_k
        }
        None => cfg.selector.k,
    }
    .min(p);
    select_features(&table.rows, &table.labels, SelectorConfig { k, ..cfg.selector }, cfg.seed)
}

/// Selects features and trains the patient forest on them.
pub fn fit_patient_classifier(table: &FeatureTable, cfg: &StackConfig) -> Result<PatientClassifier> {
    let selection = select_for_stack(table, cfg)?;
    let forest = Forest::train(&table.rows, &table.labels, &selection.features, cfg.forest, cfg.seed)?;
    Ok(PatientClassifier { selection, forest })
}

impl PatientClassifier {
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.forest.predict_proba_all(rows)
    }
}
