//! Per-patient first-order statistics of confident slice probabilities.
//!
//! For every ensemble member and each class, a patient's slice probabilities
//! for that class are filtered (`> cutoff`), sorted descending and truncated
//! to the top `k`. Nine statistics of each filtered set form the patient's
//! feature vector, ordered member-major, then class (PCa first), then stat.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const STATS_PER_CLASS: usize = 9;
pub const FEATURES_PER_MEMBER: usize = 2 * STATS_PER_CLASS;
pub const STAT_NAMES: [&str; STATS_PER_CLASS] = [
    "mean", "std", "var", "median", "sum", "extreme", "skew", "kurtosis", "range",
];

/// Class whose probabilities a set holds. The extreme statistic is the
/// maximum for PCa and the minimum for non-PCa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Pca,
    NonPca,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Pca, Class::NonPca];

    pub fn tag(self) -> &'static str {
        match self {
            Class::Pca => "pca",
            Class::NonPca => "non",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub cutoff: f64,
    pub top_k: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { cutoff: 0.74, top_k: 5 }
    }
}

/// Values strictly above `cutoff`, sorted descending, at most `top_k`. Equal
/// values keep their input order.
pub fn filter_probabilities(probs: &[f64], cfg: FilterConfig) -> Vec<f64> {
    let mut kept: Vec<f64> = probs.iter().copied().filter(|&p| p > cfg.cutoff).collect();
    kept.sort_by(|a, b| b.total_cmp(a));
    kept.truncate(cfg.top_k);
    kept
}

/// The nine statistics in [`STAT_NAMES`] order, using population moments.
/// Empty sets give all zeros; skewness and kurtosis are 0 when the values do
/// not vary.
pub fn extract_stats(values: &[f64], class: Class) -> [f64; STATS_PER_CLASS] {
    if values.is_empty() {
        return [0.0; STATS_PER_CLASS];
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    let (var, skew, kurt) = if max == min {
        (0.0, 0.0, 0.0)
    } else {
        let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        let (m2, m3, m4) = (moment(2), moment(3), moment(4));
        (m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let extreme = match class {
        Class::Pca => max,
        Class::NonPca => min,
    };
    [mean, var.sqrt(), var, median, sum, extreme, skew, kurt, max - min]
}

/// Feature vector of one patient from its filtered sets, one `[PCa, non-PCa]`
/// pair per ensemble member.
pub fn assemble_features(sets: &[[Vec<f64>; 2]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sets.len() * FEATURES_PER_MEMBER);
    for pair in sets {
        for (values, class) in pair.iter().zip(Class::BOTH) {
            out.extend_from_slice(&extract_stats(values, class));
        }
    }
    out
}

/// `cnn{m}_{class}_{stat}` names in feature order, members numbered from 1.
pub fn feature_names(n_members: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n_members * FEATURES_PER_MEMBER);
    for m in 1..=n_members {
        for class in Class::BOTH {
            for stat in STAT_NAMES {
                names.push(format!("cnn{m}_{}_{stat}", class.tag()));
            }
        }
    }
    names
}

/// Feature vectors for every patient. `member_probs[m][s]` is member `m`'s
/// PCa probability for slice `s`; `patient_of[s]` is that slice's patient.
/// Non-PCa probabilities are `1 - p`.
pub fn patient_features(
    member_probs: &[Vec<f64>],
    patient_of: &[usize],
    n_patients: usize,
    cfg: FilterConfig,
) -> Result<Vec<Vec<f64>>> {
    if member_probs.is_empty() {
        return Err(Error::Empty("ensemble member outputs".into()));
    }
    for (m, p) in member_probs.iter().enumerate() {
        if p.len() != patient_of.len() {
            return Err(Error::invalid(format!(
                "member {} has {} slice probabilities for {} slices",
                m + 1,
                p.len(),
                patient_of.len()
            )));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("member {} has probabilities outside [0, 1]", m + 1)));
        }
    }
    if let Some(&bad) = patient_of.iter().find(|&&p| p >= n_patients) {
        return Err(Error::invalid(format!("slice refers to patient {bad} of {n_patients}")));
    }
    let mut per_patient: Vec<Vec<usize>> = vec![Vec::new(); n_patients];
    for (s, &p) in patient_of.iter().enumerate() {
        per_patient[p].push(s);
    }
    Ok(per_patient
        .iter()
        .map(|slices| {
            let sets: Vec<[Vec<f64>; 2]> = member_probs
                .iter()
                .map(|probs| {
                    let pca: Vec<f64> = slices.iter().map(|&s| probs[s]).collect();
                    let non: Vec<f64> = pca.iter().map(|p| 1.0 - p).collect();
                    [filter_probabilities(&pca, cfg), filter_probabilities(&non, cfg)]
                })
                .collect();
            assemble_features(&sets)
        })
        .collect())
}

/// Patient feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub patient_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// `patient_id,label,f_000,...` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let p = self.n_features();
        let mut s = String::from("patient_id,label");
        for j in 0..p {
            write!(s, ",f_{j:03}").expect("string write");
        }
        s.push('\n');
        for ((id, label), row) in self.patient_ids.iter().zip(&self.labels).zip(&self.rows) {
            write!(s, "{id},{label}").expect("string write");
            for v in row {
                write!(s, ",{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = crate::io::data_lines(text);
        let header = lines.next().ok_or_else(|| Error::Empty("feature table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "patient_id" || cols[1] != "label" {
            return Err(Error::invalid("feature table header must start with patient_id,label"));
        }
        let p = cols.len() - 2;
        let mut t = FeatureTable {
            patient_ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        };
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != p + 2 {
                return Err(Error::invalid(format!("feature row has {} fields, expected {}", f.len(), p + 2)));
            }
            let label = match f[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::InvalidLabels(format!("label {other:?}"))),
            };
            let row = f[2..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::invalid(format!("bad feature value {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            t.patient_ids.push(f[0].to_string());
            t.labels.push(label);
            t.rows.push(row);
        }
        Ok(t)
    }
}
