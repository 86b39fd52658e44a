//! End-to-end runs: prepare, split, train a baseline, mitigate one of three
//! ways and evaluate fairness and accuracy on the held-out split.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{binarize_by_median, minmax_normalize, scale_ratings, train_test_split, SplitConfig, TabularDataset};
use crate::embed::{embed, HashEmbedConfig};
use crate::error::{Error, Result};
use crate::logreg::{fit, fit_per_group, LinearModel, TrainConfig};
use crate::metrics::{accuracy, disparate_impact, GroupFairness, Measure};
use crate::postproc::{apply_mixing, fit_mixing, MixingPolicy};
use crate::prejudice::{fit_prejudice_remover, prejudice_index, PrejudiceConfig};
use crate::repair::{fit_quantiles, repair, RepairConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ETA: f64 = 25.0;
pub const DEFAULT_REPAIR_LEVEL: f64 = 1.0;
pub const DEFAULT_EMBED_DIM: usize = 16;
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    None,
    Pre,
    In,
    Post,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::None, Stage::Pre, Stage::In, Stage::Post];

    pub fn name(self) -> &'static str {
        match self {
            Stage::None => "none",
            Stage::Pre => "pre",
            Stage::In => "in",
            Stage::Post => "post",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub attribute: String,
    /// Overrides the dataset's privileged category.
    pub privileged: Option<String>,
    pub stage: Stage,
    /// Only valid with [`Stage::Pre`].
    pub repair_level: Option<f64>,
    /// Only valid with [`Stage::In`].
    pub eta: Option<f64>,
    pub test_fraction: f64,
    pub seed: u64,
    /// Per-group weight blocks for the baseline instead of shared weights.
    pub group_weights: bool,
    pub labels: Option<Vec<String>>,
    pub embed_dim: usize,
    /// One-hot protected attribute columns as classifier inputs.
    pub include_protected: bool,
    pub train: TrainConfig,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl RunConfig {
    pub fn new(attribute: impl Into<String>, stage: Stage) -> Self {
        Self {
            attribute: attribute.into(),
            privileged: None,
            stage,
            repair_level: None,
            eta: None,
            test_fraction: 0.2,
            seed: 0,
            group_weights: false,
            labels: None,
            embed_dim: DEFAULT_EMBED_DIM,
            include_protected: false,
            train: TrainConfig::default(),
            positive: Vec::new(),
            negative: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.is_some() && self.stage != Stage::In {
            return Err(Error::InvalidConfig(format!(
                "--eta only applies to --stage in, not `{}`",
                self.stage.name()
            )));
        }
        if self.repair_level.is_some() && self.stage != Stage::Pre {
            return Err(Error::InvalidConfig(format!(
                "--repair-level only applies to --stage pre, not `{}`",
                self.stage.name()
            )));
        }
        SplitConfig::new(self.test_fraction, self.seed)?;
        HashEmbedConfig::new(self.embed_dim)?;
        self.train.validate()?;
        if let Some(l) = self.repair_level {
            RepairConfig::new(l, &self.attribute)?;
        }
        if let Some(e) = self.eta {
            PrejudiceConfig::new(e, &self.attribute, self.train)?;
        }
        Ok(())
    }

    pub fn repair_level(&self) -> f64 {
        self.repair_level.unwrap_or(DEFAULT_REPAIR_LEVEL)
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(DEFAULT_ETA)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: BTreeMap<String, String>,
    /// sha256 hex digest per input path.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            flags: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: None,
        }
    }
}

/// Fills in binary labels from raw ratings when missing, then appends the
/// min-max scaled view count, transcript embeddings and, optionally, one-hot
/// protected attributes as features.
pub fn prepare(ds: &TabularDataset, embed_dim: usize, include_protected: bool) -> Result<TabularDataset> {
    let mut out = ds.clone();
    if out.labels().is_none() {
        if let Some(raw) = out.raw_ratings() {
            let labels = binarize_by_median(&scale_ratings(raw)?)?;
            out = out.with_labels(labels)?;
        }
    }
    let mut names = out.feature_names().to_vec();
    let mut blocks = vec![out.features().clone()];
    if let Some(views) = out.views() {
        let v = minmax_normalize(views)?;
        names.push("f_views".into());
        blocks.push(Array2::from_shape_vec((v.len(), 1), v).expect("column shape"));
    }
    if let Some(texts) = out.transcripts() {
        let cfg = HashEmbedConfig::new(embed_dim)?;
        let n = texts.len();
        let flat: Vec<f64> = texts.iter().flat_map(|t| embed(t, &cfg)).collect();
        names.extend((0..embed_dim).map(|k| format!("f_emb{k}")));
        blocks.push(Array2::from_shape_vec((n, embed_dim), flat).expect("embedding shape"));
    }
    if include_protected {
        for col in out.protected_columns() {
            let spec = col.spec();
            let n = col.codes().len();
            let mut onehot = Array2::zeros((n, spec.n_categories()));
            for (i, &c) in col.codes().iter().enumerate() {
                onehot[[i, c]] = 1.0;
            }
            names.extend(spec.categories().iter().map(|c| format!("f_{}_{c}", spec.attribute())));
            blocks.push(onehot);
        }
    }
    if blocks.len() == 1 {
        return Ok(out);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let features = concatenate(Axis(1), &views).map_err(|e| Error::InvalidData(e.to_string()))?;
    out.with_features(names, features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResult {
    pub label: String,
    /// Disparate impact of the true test labels.
    pub true_di: Measure,
    pub baseline_di: Measure,
    pub mitigated_di: Measure,
    pub baseline_accuracy: f64,
    pub mitigated_accuracy: f64,
    /// `|baseline - 1| - |mitigated - 1|`; positive means closer to fair.
    pub improvement: Measure,
    /// Prejudice index of each model on the training split.
    pub baseline_prejudice_index: Measure,
    pub mitigated_prejudice_index: Measure,
    pub mitigated: GroupFairness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub labels_compared: usize,
    pub labels_improved: usize,
    pub mean_improvement: Measure,
    pub mean_baseline_accuracy: f64,
    pub mean_mitigated_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollupEntry {
    pub labels: Vec<String>,
    pub mean_baseline_di: Measure,
    pub mean_mitigated_di: Measure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollup {
    pub positive: RollupEntry,
    pub negative: RollupEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub manifest: RunManifest,
    pub stage: Stage,
    pub attribute: String,
    pub categories: Vec<String>,
    pub privileged: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub labels: Vec<LabelResult>,
    pub summary: RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<Vec<MixingPolicy>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollup: Option<Rollup>,
}

impl EvaluationReport {
    pub fn label(&self, name: &str) -> Option<&LabelResult> {
        self.labels.iter().find(|l| l.label == name)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub baseline_models: Vec<LinearModel>,
    pub mitigated_models: Vec<LinearModel>,
}

struct LabelOutcome {
    result: LabelResult,
    baseline: LinearModel,
    mitigated: LinearModel,
    policy: Option<MixingPolicy>,
}

fn label_indices(ds: &TabularDataset, wanted: Option<&[String]>) -> Result<Vec<usize>> {
    match wanted {
        None => Ok((0..ds.label_names().len()).collect()),
        Some(names) => names.iter().map(|n| ds.label_index(n)).collect(),
    }
}

fn abs_gap(m: &Measure) -> Option<f64> {
    m.value().map(|v| (v - 1.0).abs())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn measure(v: Option<f64>, reason: &str) -> Measure {
    v.map_or_else(|| Measure::undefined(reason), Measure::Value)
}

fn train_pi(model: &LinearModel, train: &TabularDataset, attribute: &str) -> Measure {
    match prejudice_index(model, train, attribute) {
        Ok(v) => Measure::Value(v),
        Err(e) => Measure::undefined(e.to_string()),
    }
}

/// Predicts on `test`, after post-processing when `policy` is set.
fn evaluate(
    j: usize,
    name: &str,
    cfg: &RunConfig,
    train: &TabularDataset,
    test: &TabularDataset,
    quantiles: Option<&(RepairConfig, TabularDataset, TabularDataset)>,
    cached: Option<&LinearModel>,
) -> Result<LabelOutcome> {
    let attr = &cfg.attribute;
    let train_col = train.protected(attr)?;
    let test_col = test.protected(attr)?;
    let spec = test_col.spec();
    let y_test = test.label_column(j)?;

    let per_group_baseline = cfg.group_weights || cfg.stage == Stage::In;
    let fit_base = |ds: &TabularDataset| {
        if per_group_baseline {
            fit_per_group(ds, j, attr, &cfg.train)
        } else {
            fit(ds, j, &cfg.train)
        }
    };
    let baseline = match cached {
        Some(m) => m.clone(),
        None => fit_base(train)?,
    };
    let base_pred = baseline.predict(test, THRESHOLD)?;

    let mut policy = None;
    let (mitigated, mitigated_pi, pred) = match cfg.stage {
        Stage::None => (baseline.clone(), train_pi(&baseline, train, attr), base_pred.clone()),
        Stage::Pre => {
            let (_, rtrain, rtest) = quantiles.expect("repair fitted for the pre stage");
            let m = fit_base(rtrain)?;
            let p = m.predict(rtest, THRESHOLD)?;
            (m.clone(), train_pi(&m, rtrain, attr), p)
        }
        Stage::In => {
            let pcfg = PrejudiceConfig::new(cfg.eta(), attr.clone(), cfg.train)?;
            let m = fit_prejudice_remover(train, j, &pcfg)?;
            let p = m.predict(test, THRESHOLD)?;
            (m.clone(), train_pi(&m, train, attr), p)
        }
        Stage::Post => {
            let y_train = train.label_column(j)?;
            let train_pred = baseline.predict(train, THRESHOLD)?;
            let pol = fit_mixing(&y_train, &train_pred, train_col.codes(), train_col.spec())?
                .with_seed(cfg.seed.wrapping_add(j as u64));
            let p = apply_mixing(&base_pred, test_col.codes(), spec, &pol)?;
            policy = Some(pol);
            (baseline.clone(), train_pi(&baseline, train, attr), p)
        }
    };

    let true_di = disparate_impact(&y_test, test_col.codes(), spec).summary_di;
    let baseline_di = disparate_impact(&base_pred, test_col.codes(), spec).summary_di;
    let mitigated_fair = disparate_impact(&pred, test_col.codes(), spec);
    let improvement = match (abs_gap(&baseline_di), abs_gap(&mitigated_fair.summary_di)) {
        (Some(b), Some(m)) => Measure::Value(b - m),
        _ => Measure::undefined("disparate impact undefined"),
    };
    Ok(LabelOutcome {
        result: LabelResult {
            label: name.to_string(),
            true_di,
            baseline_di,
            mitigated_di: mitigated_fair.summary_di.clone(),
            baseline_accuracy: accuracy(&y_test, &base_pred),
            mitigated_accuracy: accuracy(&y_test, &pred),
            improvement,
            baseline_prejudice_index: train_pi(&baseline, train, attr),
            mitigated_prejudice_index: mitigated_pi,
            mitigated: mitigated_fair,
        },
        baseline,
        mitigated,
        policy,
    })
}

fn rollup_entry(labels: &[String], results: &[LabelResult]) -> RollupEntry {
    let pick = |f: fn(&LabelResult) -> &Measure| {
        measure(
            mean(
                results
                    .iter()
                    .filter(|r| labels.contains(&r.label))
                    .filter_map(|r| f(r).value()),
            ),
            "no defined label in group",
        )
    };
    RollupEntry {
        labels: labels.to_vec(),
        mean_baseline_di: pick(|r| &r.baseline_di),
        mean_mitigated_di: pick(|r| &r.mitigated_di),
    }
}

/// Runs one stage on an already prepared dataset.
pub fn run_prepared(ds: &TabularDataset, cfg: &RunConfig, manifest: RunManifest) -> Result<RunOutput> {
    run_cached(ds, cfg, manifest, None)
}

/// `baselines`, when given, must be the baseline models of an earlier run
/// with the same data, split, labels and model family.
fn run_cached(
    ds: &TabularDataset,
    cfg: &RunConfig,
    manifest: RunManifest,
    baselines: Option<&[LinearModel]>,
) -> Result<RunOutput> {
    cfg.validate()?;
    for name in cfg.positive.iter().chain(&cfg.negative) {
        ds.label_index(name)?;
    }
    let ds = match &cfg.privileged {
        Some(p) => ds.with_group_spec(ds.protected(&cfg.attribute)?.spec().reprivileged(p)?)?,
        None => {
            ds.protected(&cfg.attribute)?;
            ds.clone()
        }
    };
    let labels = label_indices(&ds, cfg.labels.as_deref())?;
    if ds.labels().is_none() {
        return Err(Error::InvalidData("dataset has neither labels nor raw ratings".into()));
    }
    let (train, test) = train_test_split(&ds, &SplitConfig::new(cfg.test_fraction, cfg.seed)?)?;

    let repaired = if cfg.stage == Stage::Pre {
        let rcfg = RepairConfig::new(cfg.repair_level(), &cfg.attribute)?;
        let table = fit_quantiles(&train, &rcfg)?;
        let rtrain = repair(&train, &table, &rcfg)?;
        let rtest = repair(&test, &table, &rcfg)?;
        Some((rcfg, rtrain, rtest))
    } else {
        None
    };

    let outcomes = labels
        .par_iter()
        .enumerate()
        .map(|(i, &j)| {
            let cached = baselines.map(|b| &b[i]);
            evaluate(j, &ds.label_names()[j], cfg, &train, &test, repaired.as_ref(), cached)
        })
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<LabelResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let improvements: Vec<f64> = results.iter().filter_map(|r| r.improvement.value()).collect();
    let summary = RunSummary {
        labels_compared: improvements.len(),
        labels_improved: improvements.iter().filter(|&&v| v > 0.0).count(),
        mean_improvement: measure(mean(improvements.iter().copied()), "no label with defined improvement"),
        mean_baseline_accuracy: mean(results.iter().map(|r| r.baseline_accuracy)).unwrap_or(0.0),
        mean_mitigated_accuracy: mean(results.iter().map(|r| r.mitigated_accuracy)).unwrap_or(0.0),
    };
    let rollup = (!cfg.positive.is_empty() || !cfg.negative.is_empty()).then(|| Rollup {
        positive: rollup_entry(&cfg.positive, &results),
        negative: rollup_entry(&cfg.negative, &results),
    });
    let spec = ds.protected(&cfg.attribute)?.spec().clone();
    let post = (cfg.stage == Stage::Post).then(|| outcomes.iter().filter_map(|o| o.policy.clone()).collect());
    let report = EvaluationReport {
        schema_version: SCHEMA_VERSION,
        manifest,
        stage: cfg.stage,
        attribute: cfg.attribute.clone(),
        categories: spec.categories().to_vec(),
        privileged: spec.privileged_name().to_string(),
        repair_level: (cfg.stage == Stage::Pre).then(|| cfg.repair_level()),
        eta: (cfg.stage == Stage::In).then(|| cfg.eta()),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        labels: results,
        summary,
        post,
        rollup,
    };
    let (baseline_models, mitigated_models) = outcomes.into_iter().map(|o| (o.baseline, o.mitigated)).unzip();
    Ok(RunOutput {
        report,
        baseline_models,
        mitigated_models,
    })
}

pub fn run(ds: &TabularDataset, cfg: &RunConfig, manifest: RunManifest) -> Result<RunOutput> {
    cfg.validate()?;
    run_prepared(&prepare(ds, cfg.embed_dim, cfg.include_protected)?, cfg, manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: Stage,
    pub labels_compared: usize,
    pub labels_improved: usize,
    pub mean_improvement: Measure,
    pub mean_abs_gap: Measure,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLabel {
    pub label: String,
    pub baseline_di: Measure,
    /// Mitigated DI per stage, in table order.
    pub di: Vec<Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub manifest: RunManifest,
    pub attribute: String,
    pub repair_level: f64,
    pub eta: f64,
    pub stages: Vec<StageRow>,
    pub labels: Vec<ComparisonLabel>,
    pub post: Vec<MixingPolicy>,
}

impl ComparisonReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageRow> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// CSV table: one row per stage.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("stage,labels_compared,labels_improved,mean_improvement,mean_abs_gap,mean_accuracy\n");
        for r in &self.stages {
            let v = |m: &Measure| m.value().map(|x| x.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.stage.name(),
                r.labels_compared,
                r.labels_improved,
                v(&r.mean_improvement),
                v(&r.mean_abs_gap),
                r.mean_accuracy
            ));
        }
        s
    }
}

/// Runs the baseline and all three mitigation stages on the same split.
/// `cfg.repair_level` and `cfg.eta` set the pre and in stages.
pub fn compare(ds: &TabularDataset, cfg: &RunConfig, manifest: RunManifest) -> Result<ComparisonReport> {
    let prepared = prepare(ds, cfg.embed_dim, cfg.include_protected)?;
    let mut reports = Vec::new();
    let mut shared: Option<Vec<LinearModel>> = None;
    for stage in Stage::ALL {
        let mut c = cfg.clone();
        c.stage = stage;
        c.repair_level = (stage == Stage::Pre).then(|| cfg.repair_level());
        c.eta = (stage == Stage::In).then(|| cfg.eta());
        // the none, pre and post stages share one baseline family
        let cache = if stage == Stage::In { None } else { shared.as_deref() };
        let out = run_cached(&prepared, &c, manifest.clone(), cache)?;
        if stage == Stage::None {
            shared = Some(out.baseline_models);
        }
        reports.push(out.report);
    }
    let stages = reports
        .iter()
        .map(|r| StageRow {
            stage: r.stage,
            labels_compared: r.summary.labels_compared,
            labels_improved: r.summary.labels_improved,
            mean_improvement: r.summary.mean_improvement.clone(),
            mean_abs_gap: measure(mean(r.labels.iter().filter_map(|l| abs_gap(&l.mitigated_di))), "no defined label"),
            mean_accuracy: r.summary.mean_mitigated_accuracy,
        })
        .collect();
    let labels = reports[0]
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| ComparisonLabel {
            label: l.label.clone(),
            baseline_di: l.baseline_di.clone(),
            di: reports.iter().map(|r| r.labels[i].mitigated_di.clone()).collect(),
        })
        .collect();
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        manifest,
        attribute: cfg.attribute.clone(),
        repair_level: cfg.repair_level(),
        eta: cfg.eta(),
        stages,
        labels,
        post: reports[3].post.clone().unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, BiasScenario, GroupCounts};

    fn small() -> TabularDataset {
        let mut s = BiasScenario {
            n_talks: 400,
            groups: vec![GroupCounts::new("race", &[("white", 240), ("black", 160)])],
            label_names: vec!["funny".into(), "ok".into()],
            base_rate: vec![0.5, 0.5],
            bias_shift: Default::default(),
            n_features: 4,
            feature_noise: 1.0,
            coupling: 0.8,
            signal: 1.0,
            views: true,
            seed: 3,
        };
        s.shift_all_labels("race", "black", -0.2);
        generate(&s).unwrap()
    }

    #[test]
    fn incompatible_flags_are_rejected() {
        let mut cfg = RunConfig::new("race", Stage::Pre);
        cfg.eta = Some(1.0);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = RunConfig::new("race", Stage::In);
        cfg.repair_level = Some(0.5);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prepare_appends_views() {
        let ds = small();
        let p = prepare(&ds, 8, false).unwrap();
        assert_eq!(p.feature_names().last().unwrap(), "f_views");
        let col = p.features().column(p.feature_names().len() - 1).to_vec();
        assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        let q = prepare(&ds, 8, true).unwrap();
        assert_eq!(&q.feature_names()[q.feature_names().len() - 2..], ["f_race_white", "f_race_black"]);
        assert_eq!(q.features()[[0, q.feature_names().len() - 2]], 1.0);
    }

    #[test]
    fn in_stage_at_zero_eta_matches_per_group_baseline() {
        let ds = small();
        let mut none = RunConfig::new("race", Stage::None);
        none.group_weights = true;
        let mut inproc = RunConfig::new("race", Stage::In);
        inproc.eta = Some(0.0);
        let a = run(&ds, &none, RunManifest::new("run")).unwrap().report;
        let b = run(&ds, &inproc, RunManifest::new("run")).unwrap().report;
        for (x, y) in a.labels.iter().zip(&b.labels) {
            assert_eq!(x.mitigated_di, y.mitigated_di);
            assert!((x.mitigated_accuracy - y.mitigated_accuracy).abs() < 1e-6);
        }
    }

    #[test]
    fn comparison_has_four_stages() {
        let mut cfg = RunConfig::new("race", Stage::None);
        cfg.train.max_iters = 300;
        let c = compare(&small(), &cfg, RunManifest::new("compare")).unwrap();
        assert_eq!(c.stages.len(), 4);
        assert_eq!(c.post.len(), 2);
        assert!(c.table_csv().starts_with("stage,"));
    }
}
