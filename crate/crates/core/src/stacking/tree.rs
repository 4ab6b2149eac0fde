//! CART classification trees with Gini impurity.
//!
//! Samples go left when `x[feature] <= threshold`. Thresholds are midpoints
//! between consecutive distinct values seen in the node. At each node the
//! candidate features are visited in a random order and the search stops once
//! `mtry` features that vary within the node have been evaluated.

use rand::seq::SliceRandom;
use rand::Rng;

pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features evaluated per split; all candidates when `None`.
    pub mtry: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
        }
    }
}

/// One node of a flattened tree. Leaves have `feature == LEAF`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Training samples reaching the node, `[negative, positive]`.
    pub counts: [u32; 2],
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }

    /// Majority class; ties go to the negative class.
    pub fn vote(&self) -> u8 {
        u8::from(self.counts[1] > self.counts[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Pre-order; the root is node 0.
    pub nodes: Vec<Node>,
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (c[0] as f64 / n, c[1] as f64 / n);
    1.0 - a * a - b * b
}

fn class_counts(samples: &[usize], y: &[u8]) -> [usize; 2] {
    let pos = samples.iter().filter(|&&i| y[i] == 1).count();
    [samples.len() - pos, pos]
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity, `n_l * gini_l + n_r * gini_r`.
    child_impurity: f64,
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    features: &'a [usize],
    cfg: TreeConfig,
    rng: &'a mut R,
    importance: &'a mut [f64],
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn best_split(&mut self, samples: &[usize]) -> Option<Split> {
        let mut order = self.features.to_vec();
        order.shuffle(self.rng);
        let budget = self.cfg.mtry.unwrap_or(order.len()).max(1);
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let total = class_counts(samples, self.y);
        let mut evaluated = 0;
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(samples.len());
        for f in order {
            if evaluated == budget {
                break;
            }
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left = [0usize; 2];
            for i in 0..pairs.len() - 1 {
                left[pairs[i].1 as usize] += 1;
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let nr = pairs.len() - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let imp = nl as f64 * gini(left) + nr as f64 * gini(right);
                if best.as_ref().map_or(true, |s| imp < s.child_impurity) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(Split {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        child_impurity: imp,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> u32 {
        let counts = class_counts(samples, self.y);
        let id = self.nodes.len();
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            counts: [counts[0] as u32, counts[1] as u32],
        });
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || samples.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            return id as u32;
        }
        let Some(split) = self.best_split(samples) else {
            return id as u32;
        };
        self.importance[split.feature] += samples.len() as f64 * gini(counts) - split.child_impurity;
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id as u32
    }
}

impl Tree {
    /// Grows a tree on `samples` (indices into `x`, repeats allowed), splitting
    /// only on `features`. Each split's total impurity decrease, in sample
    /// units, is added to `importance[feature]`.
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[u8],
        samples: &[usize],
        features: &[usize],
        cfg: TreeConfig,
        rng: &mut R,
        importance: &mut [f64],
    ) -> Tree {
        let mut b = Builder {
            x,
            y,
            features,
            cfg,
            rng,
            importance,
            nodes: Vec::new(),
        };
        b.grow(samples, 0);
        Tree { nodes: b.nodes }
    }

    pub fn leaf(&self, row: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            let next = if row[n.feature as usize] <= n.threshold { n.left } else { n.right };
            n = &self.nodes[next as usize];
        }
        n
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        self.leaf(row).vote()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }
}
