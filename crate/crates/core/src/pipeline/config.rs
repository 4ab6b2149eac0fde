//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored; unknown keys are an
//! error. Optional values accept `none`; lists are comma-separated.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{PreprocessConfig, SplitConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::stacking::{FilterConfig, ForestConfig, SelectorConfig, StackConfig};
use crate::train::{PlateauConfig, TrainConfig};

/// Which patients the normalization statistics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationScope {
    Train,
    All,
}

/// Which patients the second stage is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Fit {
    Validation,
    TrainVal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Toy,
    Resnet41,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),* })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)*
                    other => Err(format!(
                        "expected one of {}, got {other:?}",
                        [$($text),*].join(" | ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(NormalizationScope { Train => "train", All => "all" });
keyword_enum!(Stage2Fit { Validation => "validation", TrainVal => "train_val" });
keyword_enum!(ModelKind { Toy => "toy", Resnet41 => "resnet41" });

/// Conversion between config text and typed values.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($ty:ty),*) => {$(
        impl ConfigValue for $ty {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e} ({s:?})"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u64, f64, NormalizationScope, Stage2Fit, ModelKind);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "none" || s.is_empty() {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".into(), T::render)
    }
}

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',').map(|v| usize::parse_value(v.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! config_fields {
    ($($(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct PipelineConfig {
            $($(#[doc = $doc])* pub $name: $ty,)*
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                Self { $($name: $default,)* }
            }
        }

        impl PipelineConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        self.$name = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    })*
                    other => return Err(Error::Config(format!("unknown config key {other:?}"))),
                }
                Ok(())
            }

            /// Every key with its current value, in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($name), ConfigValue::render(&self.$name))),*]
            }
        }
    };
}

config_fields! {
    /// Root of all pipeline artifacts.
    work_dir: PathBuf = PathBuf::from("work");
    /// Directory holding input volumes and `manifest.csv`; `<work_dir>/raw`
    /// when unset.
    data_dir: Option<PathBuf> = None;
    seed: u64 = 0;
    synth_patients: usize = 120;
    synth_contrast: f64 = 8.0;
    synth_size: usize = 140;
    synth_positive_fraction: f64 = 0.41;
    synth_min_slices: usize = 10;
    synth_max_slices: usize = 16;
    synth_noise: f64 = 0.04;
    synth_texture: f64 = 0.03;
    resize: usize = 144;
    crop: usize = 66;
    normalization_scope: NormalizationScope = NormalizationScope::Train;
    test_frac: f64 = 0.25;
    val_frac: f64 = 0.15;
    model: ModelKind = ModelKind::Toy;
    /// Overrides the model's dropout probability.
    dropout: Option<f64> = None;
    lr0: f64 = 0.001;
    momentum: f64 = 0.9;
    weight_decay: f64 = 1e-6;
    batch_size: usize = 8;
    plateau_patience: usize = 10;
    lr_factor: f64 = 0.1;
    min_delta: f64 = 1e-4;
    cooldown: usize = 0;
    min_lr: f64 = 1e-6;
    max_epochs: usize = 100;
    /// Loss weight of positive slices (negatives weigh 1); plain BCE when unset.
    pos_weight: Option<f64> = None;
    n_members: usize = 5;
    /// Members trained concurrently; does not change any output.
    parallel_members: usize = 1;
    cutoff: f64 = 0.74;
    top_k: usize = 5;
    selector_k: usize = 26;
    selector_trees: usize = 100;
    /// Candidate `k` values tuned by cross-validation; `selector_k` when unset.
    k_grid: Option<Vec<usize>> = None;
    cv_folds: usize = 10;
    forest_trees: usize = 200;
    forest_max_depth: Option<usize> = None;
    forest_min_leaf: usize = 1;
    forest_mtry: Option<usize> = None;
    stage2_fit: Stage2Fit = Stage2Fit::Validation;
    bootstrap: usize = 2000;
    ci_level: f64 = 0.95;
    /// Score threshold for PPV/NPV.
    decision_threshold: f64 = 0.5;
}

/// Keys that locate files or schedule work without affecting any result;
/// they are left out of the config hash.
pub const UNHASHED_KEYS: [&str; 3] = ["work_dir", "data_dir", "parallel_members"];

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Canonical text of every key, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 (hex) over the result-affecting keys.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED_KEYS.contains(&k) {
                h.update(format!("{k} = {v}\n"));
            }
        }
        crate::hex(&h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_config().validate()?;
        check(self.crop >= 1 && self.crop <= self.resize, "need 1 <= crop <= resize")?;
        check((0.0..1.0).contains(&self.test_frac), "test_frac must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.val_frac), "val_frac must lie in [0, 1)")?;
        check(self.dropout.map_or(true, |p| (0.0..1.0).contains(&p)), "dropout must lie in [0, 1)")?;
        check(self.min_lr >= 0.0, "min_lr must be non-negative")?;
        check((1..=64).contains(&self.n_members), "n_members must lie in 1..=64")?;
        check(self.parallel_members >= 1, "parallel_members must be at least 1")?;
        check((0.0..1.0).contains(&self.cutoff), "cutoff must lie in [0, 1)")?;
        check(self.top_k >= 1, "top_k must be at least 1")?;
        check(self.selector_k >= 1, "selector_k must be at least 1")?;
        check(self.selector_trees >= 1 && self.forest_trees >= 1, "tree counts must be at least 1")?;
        check(
            self.k_grid.as_ref().map_or(true, |g| !g.is_empty() && g.iter().all(|&k| k >= 1)),
            "k_grid entries must be at least 1",
        )?;
        check(self.cv_folds >= 2, "cv_folds must be at least 2")?;
        check(self.forest_min_leaf >= 1, "forest_min_leaf must be at least 1")?;
        check(self.forest_mtry.map_or(true, |m| m >= 1), "forest_mtry must be at least 1")?;
        check(self.bootstrap >= 1, "bootstrap must be at least 1")?;
        check(self.ci_level > 0.0 && self.ci_level < 1.0, "ci_level must lie in (0, 1)")?;
        check(
            self.decision_threshold.is_finite(),
            "decision_threshold must be finite",
        )?;
        if let Some(d) = &self.data_dir {
            check(d.is_dir(), &format!("data_dir {} does not exist", d.display()))?;
        }
        self.model_spec().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.work_dir.join("raw"))
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_patients: self.synth_patients,
            lesion_contrast: self.synth_contrast,
            seed: self.seed,
            size: self.synth_size,
            positive_fraction: self.synth_positive_fraction,
            min_slices: self.synth_min_slices,
            max_slices: self.synth_max_slices,
            noise: self.synth_noise,
            texture: self.synth_texture,
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            resize: self.resize,
            crop: self.crop,
        }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            test_frac: self.test_frac,
            val_frac: self.val_frac,
            seed: self.seed,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = match self.model {
            ModelKind::Toy => ModelSpec::toy(),
            ModelKind::Resnet41 => ModelSpec::resnet41(),
        };
        spec.in_size = self.crop;
        if let Some(p) = self.dropout {
            spec.dropout = p;
        }
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            plateau: PlateauConfig {
                patience: self.plateau_patience,
                factor: self.lr_factor,
                min_delta: self.min_delta,
                cooldown: self.cooldown,
            },
            min_lr: self.min_lr,
            max_epochs: self.max_epochs,
            seed: self.seed,
            class_weights: self.pos_weight.map(|w| [1.0, w]),
        }
    }

    pub fn stack(&self) -> StackConfig {
        StackConfig {
            filter: FilterConfig {
                cutoff: self.cutoff,
                top_k: self.top_k,
            },
            selector: SelectorConfig {
                k: self.selector_k,
                n_trees: self.selector_trees,
                max_depth: None,
            },
            forest: ForestConfig {
                n_trees: self.forest_trees,
                max_depth: self.forest_max_depth,
                min_samples_leaf: self.forest_min_leaf,
                mtry: self.forest_mtry,
            },
            k_grid: self.k_grid.clone(),
            cv_folds: self.cv_folds,
            seed: self.seed,
        }
    }
}
