//! Stratified patient-level train/validation/test split.
//!
//! Set sizes are fixed first from the totals: `n_test = floor(n * test_frac)`,
//! `n_val = floor((n - n_test) * val_frac)`, the rest is training. Each set's
//! size is then shared between the classes in proportion to the class counts
//! still unassigned, by largest remainder, so every class keeps close to its
//! overall share in every set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_frac: f64,
    /// Fraction of the train+validation remainder held out for validation.
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.25,
            val_frac: 0.15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// `[negatives, positives]` per set.
    pub class_counts: [[usize; 2]; 3],
}

impl SplitManifest {
    pub fn ids(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn split_of(&self, id: &str) -> Option<SplitName> {
        SplitName::ALL
            .into_iter()
            .find(|&s| self.ids(s).iter().any(|x| x == id))
    }
}

/// Shares `total` between groups proportionally to `weights` (largest
/// remainder, ties to the lower index).
fn apportion(total: usize, weights: [usize; 2]) -> [usize; 2] {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return [0, 0];
    }
    let exact = weights.map(|w| (total * w) as f64 / sum as f64);
    let mut out = exact.map(|e| e.floor() as usize);
    let left = total - out.iter().sum::<usize>();
    if left > 0 {
        let frac = [exact[0] - out[0] as f64, exact[1] - out[1] as f64];
        let k = if frac[1] > frac[0] { 1 } else { 0 };
        out[k] += left;
    }
    out
}

pub fn split_sizes(n: usize, cfg: &SplitConfig) -> [usize; 3] {
    let n_test = (n as f64 * cfg.test_frac).floor() as usize;
    let n_val = ((n - n_test) as f64 * cfg.val_frac).floor() as usize;
    [n - n_test - n_val, n_val, n_test]
}

/// Splits `(patient_id, label)` pairs. The result depends only on the set of
/// patients and the seed, not on input order.
pub fn stratified_split(patients: &[(String, u8)], cfg: &SplitConfig) -> Result<SplitManifest> {
    if !(0.0..1.0).contains(&cfg.test_frac) || !(0.0..1.0).contains(&cfg.val_frac) {
        return Err(Error::invalid("split fractions must lie in [0, 1)"));
    }
    let mut by_class: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    for (id, label) in patients {
        match label {
            0 | 1 => by_class[*label as usize].push(id.clone()),
            other => return Err(Error::InvalidLabels(format!("patient {id} has label {other}"))),
        }
    }
    for (c, ids) in by_class.iter_mut().enumerate() {
        if ids.len() < 3 {
            return Err(Error::InvalidLabels(format!(
                "class {c} has {} patients; at least 3 are needed",
                ids.len()
            )));
        }
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate patient id"));
        }
        ids.shuffle(&mut rng_for(cfg.seed, Stream::Split, c as u64));
    }

    let [_, n_val, n_test] = split_sizes(patients.len(), cfg);
    let counts = [by_class[0].len(), by_class[1].len()];
    let test = apportion(n_test, counts);
    let val = apportion(n_val, [counts[0] - test[0], counts[1] - test[1]]);

    let mut m = SplitManifest {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        class_counts: [[0; 2]; 3],
    };
    for (c, ids) in by_class.iter().enumerate() {
        let (t, rest) = ids.split_at(test[c]);
        let (v, tr) = rest.split_at(val[c]);
        m.test.extend_from_slice(t);
        m.val.extend_from_slice(v);
        m.train.extend_from_slice(tr);
        m.class_counts[0][c] = tr.len();
        m.class_counts[1][c] = v.len();
        m.class_counts[2][c] = t.len();
    }
    m.train.sort();
    m.val.sort();
    m.test.sort();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(pos: usize, neg: usize) -> Vec<(String, u8)> {
        (0..pos + neg)
            .map(|i| (format!("p{i:04}"), u8::from(i < pos)))
            .collect()
    }

    #[test]
    fn hundred_patients_floor_rounding() {
        let m = stratified_split(&cohort(40, 60), &SplitConfig::default()).unwrap();
        assert_eq!(m.sizes(), [64, 11, 25]);
    }

    #[test]
    fn table_two_sizes() {
        let m = stratified_split(&cohort(175, 252), &SplitConfig::default()).unwrap();
        let [tr, va, te] = m.sizes();
        assert!(tr.abs_diff(271) <= 2 && va.abs_diff(48) <= 2 && te.abs_diff(108) <= 2);
    }

    #[test]
    fn order_independent_and_seeded() {
        let mut c = cohort(30, 50);
        let a = stratified_split(&c, &SplitConfig::default()).unwrap();
        c.reverse();
        let b = stratified_split(&c, &SplitConfig::default()).unwrap();
        assert_eq!(a, b);
        let other = SplitConfig {
            seed: 1,
            ..Default::default()
        };
        assert_ne!(stratified_split(&c, &other).unwrap(), a);
    }

    #[test]
    fn too_few_rejected() {
        assert!(stratified_split(&cohort(2, 10), &SplitConfig::default()).is_err());
        assert!(stratified_split(&cohort(0, 10), &SplitConfig::default()).is_err());
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(11, [30, 45]), [4, 7]);
        assert_eq!(apportion(0, [3, 4]), [0, 0]);
        assert_eq!(apportion(5, [0, 4]), [0, 5]);
    }
}
