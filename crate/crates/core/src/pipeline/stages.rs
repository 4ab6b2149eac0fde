//! Pipeline stages. Each stage reads its predecessors' artifacts from the
//! work directory, writes its own, and records them in
//! `manifests/<stage>.json` with their SHA-256 digests.
//!
//! Text artifacts start with a `# config_hash=<hex>` line; every reader
//! skips `#` lines.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{NormalizationScope, PipelineConfig, Stage2Fit};
use crate::data::{
    manifest_from_csv, manifest_to_csv, normalize, preprocess_volume, stratified_split, synth_labels,
    synth_patient, ManifestRow, NormalizationStats, PatientVolume, SliceSet, SplitName,
};
use crate::error::{Error, Result};
use crate::eval::svg::{roc_svg, Series};
use crate::eval::{auc, bootstrap_ci, paired_auc_test, ppv_npv, roc, summary_csv, RocCurve};
use crate::nn::Checkpoint;
use crate::stacking::{
    ensemble_train, feature_names, member_seed, patient_features, select_for_stack, FeatureTable, Forest,
    Selection, FEATURES_PER_MEMBER,
};
use crate::train::{metrics_to_csv, predict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    Split,
    Train,
    Infer,
    Features,
    Select,
    TrainRf,
    Evaluate,
    Plot,
}

impl Stage {
    /// Execution order of `run-all`.
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Preprocess,
        Stage::Split,
        Stage::Train,
        Stage::Infer,
        Stage::Features,
        Stage::Select,
        Stage::TrainRf,
        Stage::Evaluate,
        Stage::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Features => "features",
            Stage::Select => "select",
            Stage::TrainRf => "train-rf",
            Stage::Evaluate => "evaluate",
            Stage::Plot => "plot",
        }
    }
}

/// Fixed work-directory layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("raw")
    }
    pub fn preprocessed(&self) -> PathBuf {
        self.root.join("preprocessed")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn member_checkpoint(&self, member: usize) -> PathBuf {
        self.checkpoints().join(format!("member_{member}.pcnn"))
    }
    pub fn member_metrics(&self, member: usize) -> PathBuf {
        self.checkpoints().join(format!("member_{member}_metrics.csv"))
    }
    pub fn slice_predictions(&self) -> PathBuf {
        self.predictions().join("slices.csv")
    }
    /// Feature table of one split; `baseline` selects the single-member arm.
    pub fn feature_table(&self, split: SplitName, baseline: bool) -> PathBuf {
        let prefix = if baseline { "baseline_" } else { "" };
        self.features().join(format!("{prefix}{}.csv", split.as_str()))
    }
    pub fn selection(&self, baseline: bool) -> PathBuf {
        self.features()
            .join(if baseline { "selected_baseline.json" } else { "selected.json" })
    }
    pub fn forest(&self, baseline: bool) -> PathBuf {
        self.checkpoints()
            .join(if baseline { "forest_baseline.rfmd" } else { "forest.rfmd" })
    }
}

/// Which single member the baseline arm uses (1-based).
pub const BASELINE_MEMBER: usize = 1;

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    layout: Layout,
    hash: String,
    outputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn text(&mut self, path: PathBuf, body: &str) -> Result<()> {
        let mut s = format!("# config_hash={}\n", self.hash);
        s.push_str(body);
        crate::io::write_atomic(&path, s.as_bytes())?;
        self.outputs.push(path);
        Ok(())
    }

    fn bytes(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        crate::io::write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self, stage: Stage, extra: serde_json::Value) -> Result<()> {
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let bytes = crate::io::read_artifact(p)?;
            let rel = p.strip_prefix(&self.layout.root).unwrap_or(p);
            outputs.push(serde_json::json!({
                "path": rel.to_string_lossy(),
                "sha256": crate::hex(&Sha256::digest(&bytes)),
            }));
        }
        let doc = serde_json::json!({
            "stage": stage.name(),
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "outputs": outputs,
            "details": extra,
        });
        let path = self.layout.manifests().join(format!("{}.json", stage.name()));
        let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
        crate::io::write_atomic(&path, text.as_bytes())
    }
}

/// Runs one stage.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let mut ctx = Ctx {
        cfg,
        layout: Layout::new(&cfg.work_dir),
        hash: cfg.hash(),
        outputs: Vec::new(),
    };
    log::info!("stage {} (config {})", stage.name(), &ctx.hash[..12]);
    let extra = match stage {
        Stage::Synth => synth(&mut ctx)?,
        Stage::Preprocess => preprocess(&mut ctx)?,
        Stage::Split => split(&mut ctx)?,
        Stage::Train => train_members(&mut ctx)?,
        Stage::Infer => infer(&mut ctx)?,
        Stage::Features => features(&mut ctx)?,
        Stage::Select => select(&mut ctx)?,
        Stage::TrainRf => train_rf(&mut ctx)?,
        Stage::Evaluate => evaluate(&mut ctx)?,
        Stage::Plot => plot(&mut ctx)?,
    };
    ctx.finish(stage, extra)
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    let resolved = cfg.to_text();
    crate::io::write_atomic(
        &Layout::new(&cfg.work_dir).manifests().join("config.txt"),
        format!("# config_hash={}\n{resolved}", cfg.hash()).as_bytes(),
    )?;
    Stage::ALL.iter().try_for_each(|&s| run_stage(s, cfg))
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = crate::io::read_artifact_string(path)?;
    let rows = manifest_from_csv(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if rows.is_empty() {
        return Err(Error::format(path, "manifest lists no patients"));
    }
    Ok(rows)
}

fn synth(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let sc = ctx.cfg.synth();
    let labels = synth_labels(&sc)?;
    let dir = ctx.layout.raw();
    let rows = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let v = synth_patient(&sc, i, label)?;
            let name = format!("{}.dwiv", v.patient_id);
            v.write(&dir.join(&name))?;
            Ok(ManifestRow {
                patient_id: v.patient_id,
                path: name,
                patient_label: label,
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.outputs.extend(rows.iter().map(|r| dir.join(&r.path)));
    ctx.text(dir.join("manifest.csv"), &manifest_to_csv(&rows))?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    Ok(serde_json::json!({ "patients": labels.len(), "positive_patients": n_pos }))
}

fn preprocess(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let src = ctx.cfg.raw_dir();
    let rows = read_manifest(&src.join("manifest.csv"))?;
    let dir = ctx.layout.preprocessed();
    let pc = ctx.cfg.preprocess();
    let out = rows
        .par_iter()
        .map(|r| {
            let path = resolve(&src, &r.path);
            let v = PatientVolume::read(&r.patient_id, &path)?;
            if v.patient_label != r.patient_label {
                return Err(Error::format(&path, "patient label disagrees with the manifest"));
            }
            let p = preprocess_volume(&v, pc)?;
            let name = format!("{}.dwiv", r.patient_id);
            p.write(&dir.join(&name))?;
            Ok(ManifestRow {
                path: name,
                split: None,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.outputs.extend(out.iter().map(|r| dir.join(&r.path)));
    ctx.text(dir.join("manifest.csv"), &manifest_to_csv(&out))?;
    Ok(serde_json::json!({ "patients": out.len(), "resize": pc.resize, "crop": pc.crop }))
}

fn load_volume(dir: &Path, r: &ManifestRow, stats: Option<&NormalizationStats>) -> Result<PatientVolume> {
    let v = PatientVolume::read(&r.patient_id, &resolve(dir, &r.path))?;
    match stats {
        Some(s) => normalize(&v, s),
        None => Ok(v),
    }
}

fn split(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let pre = ctx.layout.preprocessed();
    let rows = read_manifest(&pre.join("manifest.csv"))?;
    let patients: Vec<(String, u8)> = rows.iter().map(|r| (r.patient_id.clone(), r.patient_label)).collect();
    let m = stratified_split(&patients, &ctx.cfg.split())?;
    let out: Vec<ManifestRow> = rows
        .iter()
        .map(|r| ManifestRow {
            path: format!("../preprocessed/{}", r.path),
            split: m.split_of(&r.patient_id),
            ..r.clone()
        })
        .collect();
    let reference: Vec<&ManifestRow> = match ctx.cfg.normalization_scope {
        NormalizationScope::Train => out.iter().filter(|r| r.split == Some(SplitName::Train)).collect(),
        NormalizationScope::All => out.iter().collect(),
    };
    let dir = ctx.layout.split();
    // Manifest paths are relative to this directory.
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let vols = reference
        .par_iter()
        .map(|r| load_volume(&dir, r, None))
        .collect::<Result<Vec<_>>>()?;
    let stats = NormalizationStats::compute(vols.iter())?;
    ctx.text(dir.join("manifest.csv"), &manifest_to_csv(&out))?;
    ctx.text(dir.join("normalization.csv"), &stats.to_csv())?;
    let mut summary = String::from("split,patients,negative,positive\n");
    for (i, s) in SplitName::ALL.into_iter().enumerate() {
        let [neg, pos] = m.class_counts[i];
        writeln!(summary, "{},{},{neg},{pos}", s.as_str(), neg + pos).expect("string write");
    }
    ctx.text(dir.join("summary.csv"), &summary)?;
    Ok(serde_json::json!({ "sizes": m.sizes(), "normalization_scope": ctx.cfg.normalization_scope.to_string() }))
}

struct SplitData {
    rows: Vec<ManifestRow>,
    stats: NormalizationStats,
    dir: PathBuf,
}

impl SplitData {
    fn load(layout: &Layout) -> Result<Self> {
        let dir = layout.split();
        let path = dir.join("manifest.csv");
        let rows = read_manifest(&path)?;
        if rows.iter().any(|r| r.split.is_none()) {
            return Err(Error::format(&path, "every patient needs a split"));
        }
        let stats = NormalizationStats::from_csv(&crate::io::read_artifact_string(&dir.join("normalization.csv"))?)?;
        Ok(Self { rows, stats, dir })
    }

    fn rows_in(&self, splits: &[SplitName]) -> Vec<&ManifestRow> {
        self.rows
            .iter()
            .filter(|r| r.split.is_some_and(|s| splits.contains(&s)))
            .collect()
    }

    fn slices(&self, rows: &[&ManifestRow]) -> Result<SliceSet> {
        let vols = rows
            .par_iter()
            .map(|r| load_volume(&self.dir, r, Some(&self.stats)))
            .collect::<Result<Vec<_>>>()?;
        SliceSet::from_volumes(vols.iter())
    }
}

fn train_members(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let data = SplitData::load(&ctx.layout)?;
    let train_set = data.slices(&data.rows_in(&[SplitName::Train]))?;
    let val_set = data.slices(&data.rows_in(&[SplitName::Val]))?;
    let cfg = ctx.cfg;
    let spec = cfg.model_spec();
    let outcomes = ensemble_train(
        &spec,
        &train_set,
        &val_set,
        &cfg.train_config(),
        cfg.n_members,
        cfg.parallel_members,
    )?;
    let mut members = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let m = i + 1;
        ctx.bytes(ctx.layout.member_checkpoint(m), &o.checkpoint.to_bytes())?;
        ctx.text(ctx.layout.member_metrics(m), &metrics_to_csv(&o.metrics))?;
        members.push(serde_json::json!({
            "member": m,
            "seed": member_seed(cfg.seed, i),
            "best_epoch": o.best_epoch,
            "checkpoint_sha256": o.checkpoint.digest(),
        }));
    }
    Ok(serde_json::json!({
        "spec_sha256": spec.hash_hex(),
        "train_slices": train_set.len(),
        "val_slices": val_set.len(),
        "members": members,
    }))
}

fn infer(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let data = SplitData::load(&ctx.layout)?;
    let rows: Vec<&ManifestRow> = data.rows.iter().collect();
    let set = data.slices(&rows)?;
    let n = ctx.cfg.n_members;
    let probs = (1..=n)
        .into_par_iter()
        .map(|m| {
            let ckpt = Checkpoint::read(&ctx.layout.member_checkpoint(m))?;
            predict(&mut ckpt.to_model()?, &set)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::from("patient_id,slice,split,label");
    for m in 1..=n {
        write!(s, ",p_{m}").expect("string write");
    }
    s.push('\n');
    for i in 0..set.len() {
        let r = rows[set.patient_of[i]];
        let split = r.split.expect("checked").as_str();
        write!(s, "{},{},{split},{}", r.patient_id, set.slice_index[i], set.labels[i]).expect("string write");
        for p in &probs {
            write!(s, ",{}", p[i]).expect("string write");
        }
        s.push('\n');
    }
    ctx.text(ctx.layout.slice_predictions(), &s)?;
    Ok(serde_json::json!({ "slices": set.len(), "members": n }))
}

/// Parsed `predictions/slices.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePredictions {
    pub patient_ids: Vec<String>,
    pub slice: Vec<usize>,
    pub split: Vec<SplitName>,
    pub labels: Vec<u8>,
    /// `probs[m][i]`: member `m + 1`'s PCa probability for row `i`.
    pub probs: Vec<Vec<f64>>,
}

impl SlicePredictions {
    pub fn read(path: &Path) -> Result<Self> {
        let text = crate::io::read_artifact_string(path)?;
        let bad = |m: String| Error::format(path, m);
        let mut lines = crate::io::data_lines(&text);
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty predictions".into()))?.split(',').collect();
        if header.len() < 5 || header[..4] != ["patient_id", "slice", "split", "label"] {
            return Err(bad("unexpected predictions header".into()));
        }
        let n = header.len() - 4;
        let mut p = SlicePredictions {
            patient_ids: Vec::new(),
            slice: Vec::new(),
            split: Vec::new(),
            labels: Vec::new(),
            probs: vec![Vec::new(); n],
        };
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != n + 4 {
                return Err(bad(format!("bad predictions row {l:?}")));
            }
            p.patient_ids.push(f[0].to_string());
            p.slice.push(f[1].parse().map_err(|_| bad(format!("bad slice index {:?}", f[1])))?);
            p.split.push(SplitName::parse(f[2]).map_err(|e| bad(e.to_string()))?);
            p.labels.push(match f[3] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("bad label {other:?}"))),
            });
            for (m, v) in f[4..].iter().enumerate() {
                p.probs[m].push(v.parse().map_err(|_| bad(format!("bad probability {v:?}")))?);
            }
        }
        Ok(p)
    }

    pub fn rows_in(&self, split: SplitName) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Mean member probability of each listed row.
    pub fn ensemble_mean(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&i| self.probs.iter().map(|p| p[i]).sum::<f64>() / self.probs.len() as f64)
            .collect()
    }
}

fn features(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let data = SplitData::load(&ctx.layout)?;
    let preds = SlicePredictions::read(&ctx.layout.slice_predictions())?;
    if preds.probs.len() != ctx.cfg.n_members {
        return Err(Error::Config(format!(
            "predictions hold {} members but n_members = {}",
            preds.probs.len(),
            ctx.cfg.n_members
        )));
    }
    let label_of: HashMap<&str, u8> = data.rows.iter().map(|r| (r.patient_id.as_str(), r.patient_label)).collect();
    let filter = ctx.cfg.stack().filter;
    let mut sizes = Vec::new();
    for split in SplitName::ALL {
        let rows = preds.rows_in(split);
        let mut ids: Vec<String> = Vec::new();
        let mut patient_of = Vec::with_capacity(rows.len());
        for &i in &rows {
            if ids.last() != Some(&preds.patient_ids[i]) {
                ids.push(preds.patient_ids[i].clone());
            }
            patient_of.push(ids.len() - 1);
        }
        let labels = ids
            .iter()
            .map(|id| {
                label_of
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("patient {id} is not in the split manifest")))
            })
            .collect::<Result<Vec<u8>>>()?;
        for baseline in [false, true] {
            let member_probs: Vec<Vec<f64>> = if baseline {
                vec![rows.iter().map(|&i| preds.probs[BASELINE_MEMBER - 1][i]).collect()]
            } else {
                preds.probs.iter().map(|p| rows.iter().map(|&i| p[i]).collect()).collect()
            };
            let table = FeatureTable {
                patient_ids: ids.clone(),
                labels: labels.clone(),
                rows: patient_features(&member_probs, &patient_of, ids.len(), filter)?,
            };
            ctx.text(ctx.layout.feature_table(split, baseline), &table.to_csv())?;
        }
        sizes.push(ids.len());
    }
    Ok(serde_json::json!({
        "patients": sizes,
        "features": ctx.cfg.n_members * FEATURES_PER_MEMBER,
        "names": feature_names(ctx.cfg.n_members),
    }))
}

fn read_table(path: &Path) -> Result<FeatureTable> {
    FeatureTable::from_csv(&crate::io::read_artifact_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// The patients the second stage is fitted on.
fn fit_table(layout: &Layout, fit: Stage2Fit, baseline: bool) -> Result<FeatureTable> {
    let mut t = read_table(&layout.feature_table(SplitName::Val, baseline))?;
    if fit == Stage2Fit::TrainVal {
        let tr = read_table(&layout.feature_table(SplitName::Train, baseline))?;
        t.patient_ids.extend(tr.patient_ids);
        t.labels.extend(tr.labels);
        t.rows.extend(tr.rows);
    }
    Ok(t)
}

fn read_selection(path: &Path) -> Result<Selection> {
    Selection::from_json(&crate::io::read_artifact_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn select(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let stack = ctx.cfg.stack();
    let mut picked = Vec::new();
    for baseline in [false, true] {
        let table = fit_table(&ctx.layout, ctx.cfg.stage2_fit, baseline)?;
        let sel = select_for_stack(&table, &stack)?;
        let names = feature_names(table.n_features() / FEATURES_PER_MEMBER);
        let doc = serde_json::json!({
            "config_hash": ctx.hash,
            "features": sel.features,
            "names": sel.features.iter().map(|&f| names[f].clone()).collect::<Vec<_>>(),
            "importance": sel.importance,
        });
        let path = ctx.layout.selection(baseline);
        ctx.bytes(path, (serde_json::to_string_pretty(&doc).expect("json") + "\n").as_bytes())?;
        picked.push(sel.features.len());
    }
    Ok(serde_json::json!({ "selected": picked[0], "selected_baseline": picked[1] }))
}

fn train_rf(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let stack = ctx.cfg.stack();
    for baseline in [false, true] {
        let table = fit_table(&ctx.layout, ctx.cfg.stage2_fit, baseline)?;
        let sel = read_selection(&ctx.layout.selection(baseline))?;
        if sel.importance.len() != table.n_features() {
            return Err(Error::format(
                ctx.layout.selection(baseline),
                "selection does not match the feature table",
            ));
        }
        let forest = Forest::train(&table.rows, &table.labels, &sel.features, stack.forest, stack.seed)?;
        ctx.bytes(ctx.layout.forest(baseline), &forest.to_bytes())?;
    }
    Ok(serde_json::json!({ "trees": stack.forest.n_trees }))
}

fn with_ci(scores: &[f64], labels: &[u8], cfg: &PipelineConfig) -> Result<RocCurve> {
    let mut c = roc(scores, labels)?;
    c.ci95 = Some(bootstrap_ci(scores, labels, cfg.bootstrap, cfg.ci_level, cfg.seed)?);
    Ok(c)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn evaluate(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let preds = SlicePredictions::read(&ctx.layout.slice_predictions())?;
    let test = preds.rows_in(SplitName::Test);
    let slice_labels: Vec<u8> = test.iter().map(|&i| preds.labels[i]).collect();
    let slice_scores = preds.ensemble_mean(&test);
    let slice_curve = with_ci(&slice_scores, &slice_labels, cfg)?;

    let table = read_table(&ctx.layout.feature_table(SplitName::Test, false))?;
    let base_table = read_table(&ctx.layout.feature_table(SplitName::Test, true))?;
    let forest = Forest::read(&ctx.layout.forest(false))?;
    let base_forest = Forest::read(&ctx.layout.forest(true))?;
    let patient_scores = forest.predict_proba_all(&table.rows)?;
    let base_scores = base_forest.predict_proba_all(&base_table.rows)?;
    if base_table.patient_ids != table.patient_ids {
        return Err(Error::format(ctx.layout.features(), "baseline and ensemble tables list different patients"));
    }
    let patient_curve = with_ci(&patient_scores, &table.labels, cfg)?;
    let base_curve = with_ci(&base_scores, &table.labels, cfg)?;
    let p_value = paired_auc_test(&patient_scores, &base_scores, &table.labels, cfg.bootstrap, cfg.seed)?;

    let dir = ctx.layout.eval();
    ctx.text(dir.join("roc_slice.csv"), &slice_curve.to_csv())?;
    ctx.text(dir.join("roc_patient.csv"), &patient_curve.to_csv())?;
    ctx.text(dir.join("roc_patient_baseline.csv"), &base_curve.to_csv())?;
    ctx.text(dir.join("summary_slice.csv"), &summary_csv(&slice_curve))?;
    ctx.text(dir.join("summary_patient.csv"), &summary_csv(&patient_curve))?;
    ctx.text(dir.join("summary_patient_baseline.csv"), &summary_csv(&base_curve))?;

    let mut scores = String::from("patient_id,label,ensemble,baseline\n");
    for i in 0..table.labels.len() {
        writeln!(
            scores,
            "{},{},{},{}",
            table.patient_ids[i], table.labels[i], patient_scores[i], base_scores[i]
        )
        .expect("string write");
    }
    ctx.text(dir.join("patient_scores.csv"), &scores)?;

    let mut metrics = String::from("name,auc,ci_lo,ci_hi,ppv,npv,sensitivity,specificity\n");
    let mut row = |name: &str, s: &[f64], l: &[u8], curve: Option<&RocCurve>| -> Result<()> {
        let a = match curve {
            Some(c) => c.auc,
            None => auc(s, l)?,
        };
        let (lo, hi) = curve.and_then(|c| c.ci95).map_or((None, None), |(lo, hi)| (Some(lo), Some(hi)));
        let t = ppv_npv(s, l, cfg.decision_threshold)?;
        writeln!(
            metrics,
            "{name},{a},{},{},{},{},{},{}",
            opt(lo),
            opt(hi),
            opt(t.ppv),
            opt(t.npv),
            opt(t.sensitivity),
            opt(t.specificity)
        )
        .expect("string write");
        Ok(())
    };
    row("slice_ensemble", &slice_scores, &slice_labels, Some(&slice_curve))?;
    for (m, p) in preds.probs.iter().enumerate() {
        let s: Vec<f64> = test.iter().map(|&i| p[i]).collect();
        row(&format!("slice_member_{}", m + 1), &s, &slice_labels, None)?;
    }
    row("patient_ensemble", &patient_scores, &table.labels, Some(&patient_curve))?;
    row("patient_baseline", &base_scores, &table.labels, Some(&base_curve))?;
    ctx.text(dir.join("metrics.csv"), &metrics)?;
    ctx.text(
        dir.join("comparison.csv"),
        &format!(
            "comparison,auc_a,auc_b,p_value\npatient_ensemble_vs_baseline,{},{},{p_value}\n",
            patient_curve.auc, base_curve.auc
        ),
    )?;
    Ok(serde_json::json!({
        "slice_auc": slice_curve.auc,
        "patient_auc": patient_curve.auc,
        "patient_baseline_auc": base_curve.auc,
        "p_value": p_value,
    }))
}

fn read_roc(path: &Path) -> Result<Vec<crate::eval::RocPoint>> {
    RocCurve::from_csv(&crate::io::read_artifact_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn plot(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let dir = ctx.layout.eval();
    let slice = read_roc(&dir.join("roc_slice.csv"))?;
    let patient = read_roc(&dir.join("roc_patient.csv"))?;
    let base = read_roc(&dir.join("roc_patient_baseline.csv"))?;
    let svg = roc_svg(
        "Slice-level ROC (test)",
        &[Series {
            label: format!("{}-CNN ensemble", ctx.cfg.n_members),
            points: &slice,
        }],
    );
    ctx.bytes(dir.join("roc_slice.svg"), svg.as_bytes())?;
    let svg = roc_svg(
        "Patient-level ROC (test)",
        &[
            Series {
                label: "ensemble forest".into(),
                points: &patient,
            },
            Series {
                label: format!("single CNN {BASELINE_MEMBER} forest"),
                points: &base,
            },
        ],
    );
    ctx.bytes(dir.join("roc_patient.svg"), svg.as_bytes())?;
    Ok(serde_json::json!({}))
}
