//! Random forest of CART trees and its `RFMD` file format.
//!
//! ```text
//! "RFMD"               4 bytes magic
//! version              u32 (= 1)
//! seed                 u64
//! n_inputs             u32   length of the vectors the forest accepts
//! max_depth            u32   0xFFFFFFFF = unlimited
//! min_samples_leaf     u32
//! mtry                 u32
//! n_selected           u32, then that many u32 feature indices
//! n_trees              u32
//! per tree:
//!   n_nodes            u32
//!   per node (pre-order):
//!     feature u32 (0xFFFFFFFF = leaf), threshold f64,
//!     left u32, right u32, count_neg u32, count_pos u32
//! ```
//! All values little-endian.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::tree::{Node, Tree, TreeConfig, LEAF};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::rng::{rng_for, Stream};

pub const FOREST_MAGIC: &[u8; 4] = b"RFMD";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `ceil(sqrt(p))` when `None`.
    pub mtry: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub seed: u64,
    pub n_inputs: usize,
    pub features: Vec<usize>,
    pub tree_config: TreeConfig,
    pub trees: Vec<Tree>,
}

/// Checks a design matrix and its labels; returns the row length.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows for {} labels", x.len(), y.len())));
    }
    let p = x.first().map(Vec::len).ok_or_else(|| Error::Empty("training rows".into()))?;
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::shape("feature rows differ in length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidLabels("labels must be 0 or 1".into()));
    }
    Ok(p)
}

pub(crate) fn need_both_classes(y: &[u8], min_each: usize) -> Result<()> {
    let pos = y.iter().filter(|&&l| l == 1).count();
    let neg = y.len() - pos;
    if pos < min_each || neg < min_each {
        return Err(Error::InvalidLabels(format!(
            "need at least {min_each} samples per class, got {neg} negative and {pos} positive"
        )));
    }
    Ok(())
}

pub fn mtry_sqrt(p: usize) -> usize {
    ((p as f64).sqrt().ceil() as usize).max(1)
}

impl Forest {
    /// Trains on rows of `x` restricted to `features`. Each tree draws its
    /// bootstrap sample and split candidates from its own derived seed.
    pub fn train(x: &[Vec<f64>], y: &[u8], features: &[usize], cfg: ForestConfig, seed: u64) -> Result<Forest> {
        let p = check_xy(x, y)?;
        need_both_classes(y, 2)?;
        if cfg.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if features.is_empty() || features.iter().any(|&f| f >= p) {
            return Err(Error::invalid(format!("selected features must be non-empty indices below {p}")));
        }
        let tree_config = TreeConfig {
            max_depth: cfg.max_depth,
            min_samples_leaf: cfg.min_samples_leaf,
            mtry: Some(cfg.mtry.unwrap_or_else(|| mtry_sqrt(features.len())).min(features.len())),
        };
        let n = x.len();
        let trees = (0..cfg.n_trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(seed, Stream::Forest, t);
                let samples: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut imp = vec![0.0; p];
                Tree::fit(x, y, &samples, features, tree_config, &mut rng, &mut imp)
            })
            .collect();
        Ok(Forest {
            seed,
            n_inputs: p,
            features: features.to_vec(),
            tree_config,
            trees,
        })
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_inputs {
            return Err(Error::invalid(format!(
                "forest expects {} features, got {}",
                self.n_inputs,
                row.len()
            )));
        }
        if let Some(&f) = self.features.iter().find(|&&f| !row[f].is_finite()) {
            return Err(Error::NonFinite(format!("feature {f}")));
        }
        Ok(())
    }

    /// Fraction of trees voting PCa.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let votes = self.trees.iter().filter(|t| t.predict(row) == 1).count();
        Ok(votes as f64 / self.trees.len() as f64)
    }

    pub fn predict_proba_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(FOREST_MAGIC);
        w.u32(FOREST_VERSION);
        w.u64(self.seed);
        w.u32(self.n_inputs as u32);
        w.u32(self.tree_config.max_depth.map_or(u32::MAX, |d| d as u32));
        w.u32(self.tree_config.min_samples_leaf as u32);
        w.u32(self.tree_config.mtry.unwrap_or(0) as u32);
        w.u32(self.features.len() as u32);
        for &f in &self.features {
            w.u32(f as u32);
        }
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            w.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                w.u32(n.feature);
                w.f64(n.threshold);
                w.u32(n.left);
                w.u32(n.right);
                w.u32(n.counts[0]);
                w.u32(n.counts[1]);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Forest> {
        let bad = |m: String| Error::format(origin, m);
        let mut r = ByteReader::new(bytes, origin);
        r.magic(FOREST_MAGIC)?;
        let version = r.u32()?;
        if version != FOREST_VERSION {
            return Err(bad(format!("unsupported forest version {version}")));
        }
        let seed = r.u64()?;
        let n_inputs = r.u32()? as usize;
        let max_depth = match r.u32()? {
            u32::MAX => None,
            d => Some(d as usize),
        };
        let min_samples_leaf = r.u32()? as usize;
        let mtry = match r.u32()? {
            0 => None,
            m => Some(m as usize),
        };
        let n_sel = r.u32()? as usize;
        let features = (0..n_sel).map(|_| r.u32().map(|f| f as usize)).collect::<Result<Vec<_>>>()?;
        if features.iter().any(|&f| f >= n_inputs) {
            return Err(bad("selected feature out of range".into()));
        }
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for t in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 {
                return Err(bad(format!("tree {t} is empty")));
            }
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                nodes.push(Node {
                    feature: r.u32()?,
                    threshold: r.f64()?,
                    left: r.u32()?,
                    right: r.u32()?,
                    counts: [r.u32()?, r.u32()?],
                });
            }
            // children must point forward so traversal terminates
            for (i, n) in nodes.iter().enumerate() {
                if n.feature != LEAF
                    && (n.feature as usize >= n_inputs
                        || n.left as usize <= i
                        || n.right as usize <= i
                        || n.left as usize >= n_nodes
                        || n.right as usize >= n_nodes)
                {
                    return Err(bad(format!("tree {t} node {i} is malformed")));
                }
            }
            trees.push(Tree { nodes });
        }
        r.finish()?;
        if trees.is_empty() {
            return Err(bad("forest has no trees".into()));
        }
        Ok(Forest {
            seed,
            n_inputs,
            features,
            tree_config: TreeConfig {
                max_depth,
                min_samples_leaf,
                mtry,
            },
            trees,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Forest> {
        Self::from_bytes(&crate::io::read_artifact(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use rand::SeedableRng;

    fn toy(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let y = x.iter().map(|r| u8::from(r[0] + r[1] > 1.0)).collect();
        (x, y)
    }

    #[test]
    fn depth_zero_single_tree_is_prior() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let y = vec![1, 1, 1, 1, 1, 1, 0, 0, 0];
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: Some(0),
            ..Default::default()
        };
        let f = Forest::train(&x, &y, &[0], cfg, 0).unwrap();
        let p: Vec<f64> = f.predict_proba_all(&x).unwrap();
        assert!(p.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn separable_training_accuracy() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 20) as f64, (i / 20) as f64 * 3.0 + (i % 7) as f64]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] >= 10.0)).collect();
        let cfg = ForestConfig {
            n_trees: 50,
            max_depth: Some(2),
            ..Default::default()
        };
        let f = Forest::train(&x, &y, &[0, 1], cfg, 1).unwrap();
        let acc = x
            .iter()
            .zip(&y)
            .filter(|(r, &l)| u8::from(f.predict_proba(r).unwrap() > 0.5) == l)
            .count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn seeded_and_round_trips() {
        let (x, y) = toy(2);
        let cfg = ForestConfig {
            n_trees: 25,
            ..Default::default()
        };
        let a = Forest::train(&x, &y, &[0, 1, 3], cfg, 7).unwrap();
        let b = Forest::train(&x, &y, &[0, 1, 3], cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tree_config.mtry, Some(2));
        let back = Forest::from_bytes(&a.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, a);
        let mut bytes = a.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(Forest::from_bytes(&bytes, Path::new("mem")).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let (x, y) = toy(3);
        assert!(Forest::train(&x, &vec![1; y.len()], &[0], ForestConfig::default(), 0).is_err());
        let f = Forest::train(&x, &y, &[0], ForestConfig { n_trees: 3, ..Default::default() }, 0).unwrap();
        assert!(f.predict_proba(&[0.5]).is_err());
        assert!(f.predict_proba(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }
}
