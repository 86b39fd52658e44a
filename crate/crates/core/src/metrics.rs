//! Group fairness metrics over binary labels: favorable rates, disparate
//! impact, statistical parity difference and per-group confusion rates.
//!
//! Undefined quantities (empty groups, zero denominators) are reported as
//! [`Measure::Undefined`] rather than NaN.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GroupSpec, TabularDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measure {
    Value(f64),
    Undefined { undefined: String },
}

impl Measure {
    pub fn undefined(reason: impl Into<String>) -> Self {
        Measure::Undefined {
            undefined: reason.into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(*v),
            Measure::Undefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Measure::Value(_))
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

fn favorable_counts(labels: &[u8], groups: &[usize], n_categories: usize) -> (Vec<usize>, Vec<usize>) {
    let mut positives = vec![0; n_categories];
    let mut totals = vec![0; n_categories];
    for (&y, &g) in labels.iter().zip(groups) {
        totals[g] += 1;
        positives[g] += usize::from(y == 1);
    }
    (positives, totals)
}

/// Fraction of rows in `category` with label 1.
pub fn group_rate(labels: &[u8], groups: &[usize], category: usize) -> Result<f64> {
    check_len(labels.len(), groups.len())?;
    let (mut pos, mut total) = (0usize, 0usize);
    for (&y, &g) in labels.iter().zip(groups) {
        if g == category {
            total += 1;
            pos += usize::from(y == 1);
        }
    }
    if total == 0 {
        return Err(Error::UndefinedRate(format!("#{category}")));
    }
    Ok(pos as f64 / total as f64)
}

/// Unprivileged favorable rate minus privileged favorable rate.
pub fn statistical_parity_difference(
    labels: &[u8],
    groups: &[usize],
    spec: &GroupSpec,
    unprivileged: usize,
) -> Result<f64> {
    let name = |c: usize| spec.categories().get(c).cloned().unwrap_or_else(|| format!("#{c}"));
    let u = group_rate(labels, groups, unprivileged).map_err(|_| Error::UndefinedRate(name(unprivileged)))?;
    let p = group_rate(labels, groups, spec.privileged())
        .map_err(|_| Error::UndefinedRate(name(spec.privileged())))?;
    Ok(u - p)
}

/// Disparate impact and parity difference of one unprivileged category
/// against the privileged one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetric {
    pub unprivileged: String,
    pub privileged: String,
    pub disparate_impact: Measure,
    pub statistical_parity_difference: Measure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFairness {
    pub group_sizes: Vec<usize>,
    pub group_rates: Vec<Measure>,
    pub pairs: Vec<PairMetric>,
    /// `matrix[a][b]` is rate(a) / rate(b) over all ordered category pairs.
    pub matrix: Vec<Vec<Measure>>,
    pub summary_di: Measure,
}

impl GroupFairness {
    /// Minimum defined disparate impact over unprivileged-vs-privileged pairs.
    pub fn summary(&self) -> Option<f64> {
        self.summary_di.value()
    }

    pub fn rate(&self, category: usize) -> Option<f64> {
        self.group_rates[category].value()
    }
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Measure {
    match (num, den) {
        (None, _) | (_, None) => Measure::undefined("empty group"),
        (Some(_), Some(d)) if d == 0.0 => Measure::undefined("zero denominator rate"),
        (Some(n), Some(d)) => Measure::Value(n / d),
    }
}

/// All-pairs disparate impact for one binary label.
pub fn disparate_impact(labels: &[u8], groups: &[usize], spec: &GroupSpec) -> GroupFairness {
    let k = spec.n_categories();
    let (positives, totals) = favorable_counts(labels, groups, k);
    let rates: Vec<Option<f64>> = positives
        .iter()
        .zip(&totals)
        .map(|(&p, &t)| (t > 0).then(|| p as f64 / t as f64))
        .collect();
    let priv_idx = spec.privileged();
    let mut pairs = Vec::new();
    let mut summary: Option<f64> = None;
    for u in (0..k).filter(|&u| u != priv_idx) {
        let di = ratio(rates[u], rates[priv_idx]);
        if let Some(v) = di.value() {
            summary = Some(summary.map_or(v, |s: f64| s.min(v)));
        }
        let spd = match (rates[u], rates[priv_idx]) {
            (Some(a), Some(b)) => Measure::Value(a - b),
            _ => Measure::undefined("empty group"),
        };
        pairs.push(PairMetric {
            unprivileged: spec.categories()[u].clone(),
            privileged: spec.privileged_name().to_string(),
            disparate_impact: di,
            statistical_parity_difference: spd,
        });
    }
    let matrix = (0..k)
        .map(|a| (0..k).map(|b| ratio(rates[a], rates[b])).collect())
        .collect();
    GroupFairness {
        group_sizes: totals,
        group_rates: rates
            .iter()
            .map(|r| r.map_or_else(|| Measure::undefined("empty group"), Measure::Value))
            .collect(),
        pairs,
        matrix,
        summary_di: summary.map_or_else(|| Measure::undefined("no defined pair"), Measure::Value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn tpr(&self) -> Measure {
        match self.positives() {
            0 => Measure::undefined("no positive labels"),
            p => Measure::Value(self.tp as f64 / p as f64),
        }
    }

    pub fn fpr(&self) -> Measure {
        match self.negatives() {
            0 => Measure::undefined("no negative labels"),
            n => Measure::Value(self.fp as f64 / n as f64),
        }
    }
}

/// Confusion counts restricted to the rows of `category`.
pub fn group_confusion(
    labels_true: &[u8],
    labels_pred: &[u8],
    groups: &[usize],
    category: usize,
) -> Result<ConfusionCounts> {
    check_len(labels_true.len(), labels_pred.len())?;
    check_len(labels_true.len(), groups.len())?;
    let mut c = ConfusionCounts::default();
    for ((&t, &p), &g) in labels_true.iter().zip(labels_pred).zip(groups) {
        if g != category {
            continue;
        }
        match (t == 1, p == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    if c.positives() + c.negatives() == 0 {
        return Err(Error::UndefinedRate(format!("#{category}")));
    }
    Ok(c)
}

pub fn accuracy(labels_true: &[u8], labels_pred: &[u8]) -> f64 {
    if labels_true.is_empty() {
        return 0.0;
    }
    let correct = labels_true
        .iter()
        .zip(labels_pred)
        .filter(|(a, b)| a == b)
        .count();
    correct as f64 / labels_true.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFairness {
    pub label: String,
    #[serde(flatten)]
    pub fairness: GroupFairness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub categories: Vec<String>,
    pub privileged: String,
    pub labels: Vec<LabelFairness>,
}

impl FairnessReport {
    pub fn label(&self, name: &str) -> Option<&LabelFairness> {
        self.labels.iter().find(|l| l.label == name)
    }

    /// Rows of `(label, unprivileged/privileged, di)` for plotting; undefined
    /// entries are left empty.
    pub fn plot_rows(&self) -> Vec<(String, String, String)> {
        let mut rows = Vec::new();
        for l in &self.labels {
            for p in &l.fairness.pairs {
                rows.push((
                    l.label.clone(),
                    format!("{}/{}", p.unprivileged, p.privileged),
                    p.disparate_impact.value().map(|v| v.to_string()).unwrap_or_default(),
                ));
            }
        }
        rows
    }
}

/// Builds a report from per-label binary columns, labels computed in parallel.
pub fn fairness_report(
    label_names: &[String],
    columns: &[Vec<u8>],
    groups: &[usize],
    spec: &GroupSpec,
) -> FairnessReport {
    let labels = label_names
        .par_iter()
        .zip(columns.par_iter())
        .map(|(name, col)| LabelFairness {
            label: name.clone(),
            fairness: disparate_impact(col, groups, spec),
        })
        .collect();
    FairnessReport {
        attribute: spec.attribute().to_string(),
        categories: spec.categories().to_vec(),
        privileged: spec.privileged_name().to_string(),
        labels,
    }
}

/// Audits the dataset's binary labels against one protected attribute.
pub fn audit_labels(
    ds: &TabularDataset,
    spec: &GroupSpec,
    label_indices: &[usize],
) -> Result<FairnessReport> {
    let col = ds.protected(spec.attribute())?;
    if col.spec().categories() != spec.categories() {
        return Err(Error::InvalidConfig(format!(
            "categories for `{}` do not match the dataset",
            spec.attribute()
        )));
    }
    let names: Vec<String> = label_indices
        .iter()
        .map(|&j| ds.label_names()[j].clone())
        .collect();
    let columns = label_indices
        .iter()
        .map(|&j| ds.label_column(j))
        .collect::<Result<Vec<_>>>()?;
    Ok(fairness_report(&names, &columns, col.codes(), spec))
}
