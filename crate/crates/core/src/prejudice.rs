//! Prejudice remover: per-group logistic regression regularized by the
//! prejudice index, the plug-in mutual information between the model's
//! predicted label and the sensitive attribute.
//!
//! With `p_i` the model probability of label 1 for row `i`, `q_s` the mean of
//! `p_i` over group `s` and `q` the overall mean,
//!
//! ```text
//! PI = 1/N * sum_i [ p_i ln(q_{s_i} / q) + (1 - p_i) ln((1 - q_{s_i}) / (1 - q)) ]
//! ```
//!
//! with each ratio clamped below at `1e-12`. The training objective is
//! `mean log-loss + eta * PI + (l2 / 2) ||w||^2`, and its gradient includes the
//! dependence of `q_s` and `q` on the parameters.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::logreg::{binary_targets, model_keys, summary, LinearModel, LogisticObjective, TrainConfig};
use crate::optim::{gradient_descent, Objective};

pub const RATIO_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrejudiceConfig {
    pub eta: f64,
    pub attribute: String,
    pub train: TrainConfig,
}

impl PrejudiceConfig {
    pub fn new(eta: f64, attribute: impl Into<String>, train: TrainConfig) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(Self {
            eta,
            attribute: attribute.into(),
            train,
        })
    }
}

struct GroupMeans {
    counts: Vec<f64>,
    /// Sum of p over each group.
    sums: Vec<f64>,
    total: f64,
    n: f64,
}

fn group_means(probs: &[f64], groups: &[usize], n_groups: usize) -> GroupMeans {
    let mut counts = vec![0.0; n_groups];
    let mut sums = vec![0.0; n_groups];
    for (&p, &g) in probs.iter().zip(groups) {
        counts[g] += 1.0;
        sums[g] += p;
    }
    GroupMeans {
        counts,
        sums,
        total: probs.iter().sum(),
        n: probs.len() as f64,
    }
}

/// `ln(max(num / den, clamp))` and whether the log is unclamped.
fn clamped_log_ratio(num: f64, den: f64) -> (f64, bool) {
    if den <= 0.0 {
        return (0.0, false);
    }
    let r = num / den;
    if r > RATIO_CLAMP {
        (r.ln(), true)
    } else {
        (RATIO_CLAMP.ln(), false)
    }
}

/// Per-group log ratios `(A_s, B_s)` for label 1 and label 0, plus activity flags.
fn log_ratios(m: &GroupMeans) -> Vec<((f64, bool), (f64, bool))> {
    let q = m.total / m.n;
    m.counts
        .iter()
        .zip(&m.sums)
        .map(|(&c, &s)| {
            let qs = s / c;
            (clamped_log_ratio(qs, q), clamped_log_ratio(1.0 - qs, 1.0 - q))
        })
        .collect()
}

/// Prejudice index from per-row probabilities and group codes. Every group
/// in `0..n_groups` must have at least one row.
pub fn prejudice_index_from_probs(probs: &[f64], groups: &[usize], n_groups: usize) -> f64 {
    let m = group_means(probs, groups, n_groups);
    let ratios = log_ratios(&m);
    probs
        .iter()
        .zip(groups)
        .map(|(&p, &g)| {
            let ((a, _), (b, _)) = ratios[g];
            p * a + (1.0 - p) * b
        })
        .sum::<f64>()
        / m.n
}

/// Gradient of the prejudice index with respect to each `p_k`.
pub fn prejudice_index_prob_gradient(probs: &[f64], groups: &[usize], n_groups: usize) -> Vec<f64> {
    let m = group_means(probs, groups, n_groups);
    let ratios = log_ratios(&m);
    let q = m.total / m.n;
    // Feedback through q: sum over active groups of S1_s / (N q), likewise for label 0.
    let mut c_a = 0.0;
    let mut c_b = 0.0;
    for (s, ((_, act_a), (_, act_b))) in ratios.iter().enumerate() {
        if *act_a {
            c_a += m.sums[s] / (m.n * q);
        }
        if *act_b {
            c_b += (m.counts[s] - m.sums[s]) / (m.n * (1.0 - q));
        }
    }
    let per_group: Vec<f64> = ratios
        .iter()
        .map(|&((a, act_a), (b, act_b))| {
            let ia = if act_a { 1.0 } else { 0.0 };
            let ib = if act_b { 1.0 } else { 0.0 };
            (a - b + ia - c_a - ib + c_b) / m.n
        })
        .collect();
    groups.iter().map(|&g| per_group[g]).collect()
}

/// Log-loss + `eta` * prejudice index + L2 over per-group weight blocks. The
/// block keys double as the sensitive groups.
#[derive(Debug, Clone)]
pub struct PrejudiceObjective<'a> {
    pub logistic: LogisticObjective<'a>,
    pub eta: f64,
}

impl PrejudiceObjective<'_> {
    pub fn prejudice_index(&self, theta: &[f64]) -> f64 {
        let probs = self.logistic.probabilities(theta);
        prejudice_index_from_probs(&probs, &self.logistic.keys, self.logistic.n_keys)
    }
}

impl Objective for PrejudiceObjective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let lg = &self.logistic;
        let probs = lg.probabilities(theta);
        let mut v = lg.mean_log_loss(&probs) + lg.l2_penalty(theta);
        if self.eta != 0.0 {
            v += self.eta * prejudice_index_from_probs(&probs, &lg.keys, lg.n_keys);
        }
        v
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let lg = &self.logistic;
        let probs = lg.probabilities(theta);
        let mut value = lg.mean_log_loss(&probs) + lg.l2_penalty(theta);
        let mut dz = lg.log_loss_logit_gradient(&probs);
        if self.eta != 0.0 {
            value += self.eta * prejudice_index_from_probs(&probs, &lg.keys, lg.n_keys);
            let dp = prejudice_index_prob_gradient(&probs, &lg.keys, lg.n_keys);
            for ((z, &p), g) in dz.iter_mut().zip(&probs).zip(&dp) {
                *z += self.eta * g * p * (1.0 - p);
            }
        }
        let mut grad = vec![0.0; theta.len()];
        lg.backprop_logits(&dz, &mut grad);
        lg.add_l2_gradient(theta, &mut grad);
        (value, grad)
    }
}

fn group_codes(ds: &TabularDataset, attribute: &str) -> Result<(Vec<usize>, usize)> {
    let col = ds.protected(attribute)?;
    if let Some(empty) = col.counts().iter().position(|&c| c == 0) {
        return Err(Error::Unfittable(format!(
            "prejudice index undefined: group `{}` of `{attribute}` has no rows",
            col.spec().categories()[empty]
        )));
    }
    Ok((col.codes().to_vec(), col.spec().n_categories()))
}

/// Prejudice index of `model`'s predictions on `ds` with respect to `attribute`.
pub fn prejudice_index(model: &LinearModel, ds: &TabularDataset, attribute: &str) -> Result<f64> {
    let (codes, k) = group_codes(ds, attribute)?;
    let probs = model.predict_proba(ds)?;
    Ok(prejudice_index_from_probs(&probs, &codes, k))
}

fn objective_for<'a>(
    ds: &'a TabularDataset,
    label_index: usize,
    cfg: &PrejudiceConfig,
) -> Result<(PrejudiceObjective<'a>, Vec<String>)> {
    let targets = binary_targets(ds, label_index)?;
    let (key_names, keys) = model_keys(ds, Some(&cfg.attribute))?;
    Ok((
        PrejudiceObjective {
            logistic: LogisticObjective {
                features: ds.features().view(),
                targets,
                keys,
                n_keys: key_names.len(),
                l2: cfg.train.l2,
            },
            eta: cfg.eta,
        },
        key_names,
    ))
}

/// Training objective of a per-group `model` on `ds`.
pub fn pr_objective(
    model: &LinearModel,
    ds: &TabularDataset,
    label_index: usize,
    cfg: &PrejudiceConfig,
) -> Result<f64> {
    if model.group_attribute.as_deref() != Some(cfg.attribute.as_str()) {
        return Err(Error::InvalidConfig(format!(
            "model is not keyed by `{}`",
            cfg.attribute
        )));
    }
    let (objective, keys) = objective_for(ds, label_index, cfg)?;
    if !model.keys().eq(keys.iter().map(String::as_str)) || ds.feature_names() != model.feature_names.as_slice() {
        return Err(Error::InvalidConfig("model does not match the dataset".into()));
    }
    Ok(objective.value(&model.theta()))
}

pub fn fit_prejudice_remover(
    ds: &TabularDataset,
    label_index: usize,
    cfg: &PrejudiceConfig,
) -> Result<LinearModel> {
    cfg.train.validate()?;
    PrejudiceConfig::new(cfg.eta, cfg.attribute.clone(), cfg.train)?;
    group_codes(ds, &cfg.attribute)?;
    let (objective, key_names) = objective_for(ds, label_index, cfg)?;
    let t = &cfg.train;
    let descent = gradient_descent(
        &objective,
        t.initial_theta(objective.logistic.n_params()),
        t.learning_rate,
        t.max_iters,
        t.tol,
    );
    let mut model = LinearModel::zeros(
        ds.label_names()[label_index].clone(),
        ds.feature_names().to_vec(),
        Some(cfg.attribute.clone()),
        key_names,
    );
    model.set_theta(&descent.theta);
    model.training = Some(summary("prejudice_remover", t, Some(cfg.eta), &descent));
    Ok(model)
}
