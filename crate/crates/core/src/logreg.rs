//! Binary logistic regression trained by deterministic full-batch gradient
//! descent, with either one shared weight vector or one per sensitive group.
//!
//! Parameters are laid out as one block per key, `[w_0 .. w_{d-1}, b]`, in
//! key order. The loss is the mean log-loss with probabilities clamped to
//! `[1e-12, 1 - 1e-12]` plus `(l2 / 2) * sum ||w_k||^2`; biases are not
//! penalized.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::optim::{gradient_descent, Descent, Objective};
use crate::rng::SeededRng;

pub const PROB_CLAMP: f64 = 1e-12;
/// Key used by models with a single shared weight vector.
pub const SHARED_KEY: &str = "*";

/// Dot product with four partial sums.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub l2: f64,
    /// `None` starts from zero weights; `Some(seed)` draws initial weights
    /// as `0.1 * normal()` from the seeded stream, block by block.
    pub init_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.0,
            max_iters: 1000,
            tol: 1e-6,
            l2: 1e-3,
            init_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidConfig("l2 must be nonnegative".into()));
        }
        Ok(())
    }

    pub(crate) fn initial_theta(&self, len: usize) -> Vec<f64> {
        match self.init_seed {
            None => vec![0.0; len],
            Some(seed) => {
                let mut rng = SeededRng::new(seed);
                (0..len).map(|_| 0.1 * rng.normal()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedWeights {
    pub key: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub method: String,
    pub config: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub schema_version: u32,
    pub label: String,
    pub feature_names: Vec<String>,
    /// Protected attribute selecting the weight block, or `None` when shared.
    pub group_attribute: Option<String>,
    pub groups: Vec<KeyedWeights>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub training: Option<TrainingSummary>,
}

/// Features plus the weight-block index of every row.
#[derive(Debug, Clone)]
pub struct ModelInput<'a> {
    pub features: ArrayView2<'a, f64>,
    pub keys: Vec<usize>,
}

impl LinearModel {
    /// All-zero model over the given keys.
    pub fn zeros(
        label: impl Into<String>,
        feature_names: Vec<String>,
        group_attribute: Option<String>,
        keys: Vec<String>,
    ) -> Self {
        let d = feature_names.len();
        Self {
            schema_version: 1,
            label: label.into(),
            feature_names,
            group_attribute,
            groups: keys
                .into_iter()
                .map(|key| KeyedWeights {
                    key,
                    weights: vec![0.0; d],
                    bias: 0.0,
                })
                .collect(),
            training: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.key.as_str())
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.groups.len() * (self.n_features() + 1));
        for g in &self.groups {
            t.extend_from_slice(&g.weights);
            t.push(g.bias);
        }
        t
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        let d = self.n_features();
        for (g, block) in self.groups.iter_mut().zip(theta.chunks(d + 1)) {
            g.weights.copy_from_slice(&block[..d]);
            g.bias = block[d];
        }
    }

    /// Resolves feature columns and per-row weight blocks for `ds`.
    pub fn input<'a>(&self, ds: &'a TabularDataset) -> Result<ModelInput<'a>> {
        if ds.feature_names() != self.feature_names.as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: ds.feature_names().len(),
            });
        }
        let keys = match &self.group_attribute {
            None => vec![0; ds.n_rows()],
            Some(attr) => {
                let col = ds.protected(attr)?;
                let map: Vec<Option<usize>> = col
                    .spec()
                    .categories()
                    .iter()
                    .map(|c| self.groups.iter().position(|g| &g.key == c))
                    .collect();
                col.codes()
                    .iter()
                    .map(|&c| {
                        map[c].ok_or_else(|| Error::UnknownGroup {
                            attribute: attr.clone(),
                            category: col.spec().categories()[c].clone(),
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(ModelInput {
            features: ds.features().view(),
            keys,
        })
    }

    pub fn predict_proba_input(&self, input: &ModelInput<'_>) -> Result<Vec<f64>> {
        if input.features.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: input.features.ncols(),
            });
        }
        Ok(input
            .features
            .rows()
            .into_iter()
            .zip(&input.keys)
            .map(|(row, &k)| {
                let g = &self.groups[k];
                let z: f64 = row.iter().zip(&g.weights).map(|(x, w)| x * w).sum::<f64>() + g.bias;
                sigmoid(z)
            })
            .collect())
    }

    pub fn predict_proba(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        self.predict_proba_input(&self.input(ds)?)
    }

    /// Hard labels, `1` iff probability is strictly above `threshold`.
    pub fn predict(&self, ds: &TabularDataset, threshold: f64) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(ds)?
            .into_iter()
            .map(|p| u8::from(p > threshold))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        let d = model.n_features();
        if model.groups.is_empty() || model.groups.iter().any(|g| g.weights.len() != d) {
            return Err(Error::InvalidData("model weight blocks do not match features".into()));
        }
        if model.theta().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("model has non-finite weights".into()));
        }
        Ok(model)
    }
}

/// Mean clamped log-loss plus L2 over a keyed design.
#[derive(Debug, Clone)]
pub struct LogisticObjective<'a> {
    pub features: ArrayView2<'a, f64>,
    pub targets: Vec<f64>,
    pub keys: Vec<usize>,
    pub n_keys: usize,
    pub l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn n_params(&self) -> usize {
        self.n_keys * (self.features.ncols() + 1)
    }

    /// Per-row probabilities.
    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.features.ncols();
        self.features
            .rows()
            .into_iter()
            .zip(&self.keys)
            .map(|(row, &k)| {
                let block = &theta[k * (d + 1)..(k + 1) * (d + 1)];
                let z = match row.as_slice() {
                    Some(x) => dot(x, &block[..d]),
                    None => row.iter().zip(&block[..d]).map(|(x, w)| x * w).sum::<f64>(),
                } + block[d];
                sigmoid(z)
            })
            .collect()
    }

    pub fn l2_penalty(&self, theta: &[f64]) -> f64 {
        let d = self.features.ncols();
        let sq: f64 = theta
            .chunks(d + 1)
            .map(|b| b[..d].iter().map(|w| w * w).sum::<f64>())
            .sum();
        0.5 * self.l2 * sq
    }

    pub fn mean_log_loss(&self, probs: &[f64]) -> f64 {
        let n = probs.len() as f64;
        probs
            .iter()
            .zip(&self.targets)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                // targets are 0 or 1
                if y == 1.0 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n
    }

    /// Adds `dz[i] * d z_i / d theta` to `grad`.
    pub(crate) fn backprop_logits(&self, dz: &[f64], grad: &mut [f64]) {
        let d = self.features.ncols();
        for ((row, &k), &g) in self.features.rows().into_iter().zip(&self.keys).zip(dz) {
            if g == 0.0 {
                continue;
            }
            let block = &mut grad[k * (d + 1)..(k + 1) * (d + 1)];
            match row.as_slice() {
                Some(x) => block[..d].iter_mut().zip(x).for_each(|(b, x)| *b += g * x),
                None => block[..d].iter_mut().zip(row.iter()).for_each(|(b, x)| *b += g * x),
            }
            block[d] += g;
        }
    }

    pub(crate) fn add_l2_gradient(&self, theta: &[f64], grad: &mut [f64]) {
        let d = self.features.ncols();
        for (gb, tb) in grad.chunks_mut(d + 1).zip(theta.chunks(d + 1)) {
            for (g, w) in gb[..d].iter_mut().zip(&tb[..d]) {
                *g += self.l2 * w;
            }
        }
    }

    /// Gradient of the log-loss term with respect to each logit.
    pub(crate) fn log_loss_logit_gradient(&self, probs: &[f64]) -> Vec<f64> {
        let n = probs.len() as f64;
        probs
            .iter()
            .zip(&self.targets)
            .map(|(&p, &y)| {
                if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                    (p - y) / n
                } else {
                    // clamp active: flat in p
                    0.0
                }
            })
            .collect()
    }
}

impl Objective for LogisticObjective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let probs = self.probabilities(theta);
        self.mean_log_loss(&probs) + self.l2_penalty(theta)
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let probs = self.probabilities(theta);
        let value = self.mean_log_loss(&probs) + self.l2_penalty(theta);
        let dz = self.log_loss_logit_gradient(&probs);
        let mut grad = vec![0.0; theta.len()];
        self.backprop_logits(&dz, &mut grad);
        self.add_l2_gradient(theta, &mut grad);
        (value, grad)
    }
}

/// Mean clamped log-loss of `model` on `input` plus `(l2 / 2) ||w||^2`.
pub fn nll_loss(model: &LinearModel, input: &ModelInput<'_>, labels: &[u8], l2: f64) -> Result<f64> {
    if labels.len() != input.features.nrows() || input.keys.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: input.features.nrows(),
            found: labels.len(),
        });
    }
    if input.features.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: input.features.ncols(),
        });
    }
    let obj = LogisticObjective {
        features: input.features,
        targets: labels.iter().map(|&y| f64::from(y)).collect(),
        keys: input.keys.clone(),
        n_keys: model.groups.len(),
        l2,
    };
    Ok(obj.value(&model.theta()))
}

pub(crate) fn binary_targets(ds: &TabularDataset, label_index: usize) -> Result<Vec<f64>> {
    let labels = ds.label_column(label_index)?;
    let ones = labels.iter().filter(|&&y| y == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::DegenerateLabel(ds.label_names()[label_index].clone()));
    }
    Ok(labels.into_iter().map(f64::from).collect())
}

pub(crate) fn summary(method: &str, cfg: &TrainConfig, eta: Option<f64>, d: &Descent) -> TrainingSummary {
    TrainingSummary {
        method: method.into(),
        config: *cfg,
        eta,
        objective: d.objective,
        initial_objective: d.initial_objective,
        iterations: d.iterations,
        converged: d.converged,
    }
}

/// Keys and per-row key indices for a (possibly grouped) model.
pub(crate) fn model_keys(ds: &TabularDataset, attribute: Option<&str>) -> Result<(Vec<String>, Vec<usize>)> {
    match attribute {
        None => Ok((vec![SHARED_KEY.to_string()], vec![0; ds.n_rows()])),
        Some(attr) => {
            let col = ds.protected(attr)?;
            if let Some(empty) = col.counts().iter().position(|&c| c == 0) {
                return Err(Error::Unfittable(format!(
                    "group `{}` of `{attr}` has no rows",
                    col.spec().categories()[empty]
                )));
            }
            Ok((col.spec().categories().to_vec(), col.codes().to_vec()))
        }
    }
}

fn fit_keyed(
    ds: &TabularDataset,
    label_index: usize,
    attribute: Option<&str>,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    cfg.validate()?;
    let targets = binary_targets(ds, label_index)?;
    let (key_names, keys) = model_keys(ds, attribute)?;
    let objective = LogisticObjective {
        features: ds.features().view(),
        targets,
        keys,
        n_keys: key_names.len(),
        l2: cfg.l2,
    };
    let descent = gradient_descent(
        &objective,
        cfg.initial_theta(objective.n_params()),
        cfg.learning_rate,
        cfg.max_iters,
        cfg.tol,
    );
    let mut model = LinearModel::zeros(
        ds.label_names()[label_index].clone(),
        ds.feature_names().to_vec(),
        attribute.map(str::to_string),
        key_names,
    );
    model.set_theta(&descent.theta);
    model.training = Some(summary("logistic", cfg, None, &descent));
    Ok(model)
}

/// Shared-weight logistic regression for one label.
pub fn fit(ds: &TabularDataset, label_index: usize, cfg: &TrainConfig) -> Result<LinearModel> {
    fit_keyed(ds, label_index, None, cfg)
}

/// Logistic regression with an independent weight block per category of
/// `attribute`, trained on the joint mean loss.
pub fn fit_per_group(
    ds: &TabularDataset,
    label_index: usize,
    attribute: &str,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    fit_keyed(ds, label_index, Some(attribute), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetParts, GroupSpec, ProtectedColumn};
    use ndarray::{array, Array2};

    fn line_dataset() -> TabularDataset {
        let xs = [-1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let spec = GroupSpec::new("g", vec!["a".into(), "b".into()], 0).unwrap();
        TabularDataset::new(DatasetParts {
            ids: (0..6).map(|i| i.to_string()).collect(),
            feature_names: vec!["f_0".into()],
            features: Array2::from_shape_vec((6, 1), xs.to_vec()).unwrap(),
            protected: vec![ProtectedColumn::new(spec, vec![0, 1, 0, 1, 0, 1]).unwrap()],
            label_names: vec!["y".into()],
            labels: Some(Array2::from_shape_vec((6, 1), xs.iter().map(|&x| u8::from(x > 0.0)).collect()).unwrap()),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.880_797_077_977_882_44).abs() < 1e-15);
        for z in [-700.0, -30.0, -1.5, 0.3, 12.0, 700.0] {
            let s = sigmoid(z);
            assert!(s.is_finite());
            assert!((s - (1.0 - sigmoid(-z))).abs() < 1e-15);
        }
        assert!(sigmoid(-700.0) > 0.0);
    }

    #[test]
    fn zero_model_is_uninformative() {
        let ds = line_dataset();
        let m = LinearModel::zeros("y", vec!["f_0".into()], None, vec![SHARED_KEY.into()]);
        let input = m.input(&ds).unwrap();
        let loss = nll_loss(&m, &input, &ds.label_column(0).unwrap(), 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(m.predict_proba(&ds).unwrap().iter().all(|&p| p == 0.5));
        assert!(m.predict(&ds, 0.5).unwrap().iter().all(|&p| p == 0));
    }

    #[test]
    fn separation_stays_finite() {
        let ds = line_dataset();
        let mut m = LinearModel::zeros("y", vec!["f_0".into()], None, vec![SHARED_KEY.into()]);
        m.set_theta(&[1e4, 0.0]);
        let input = m.input(&ds).unwrap();
        let loss = nll_loss(&m, &input, &ds.label_column(0).unwrap(), 0.0).unwrap();
        assert!(loss.is_finite() && loss < 1e-11);
        m.set_theta(&[-1e4, 0.0]);
        let loss = nll_loss(&m, &input, &ds.label_column(0).unwrap(), 0.0).unwrap();
        // 1 - (1 - 1e-12) is not exactly 1e-12 in binary
        assert!((loss - -(PROB_CLAMP.ln())).abs() < 1e-3, "{loss}");
    }

    #[test]
    fn two_row_fixture_matches_hand_evaluation() {
        // w = (0.5, -1), b = 0.25; rows (1, 2) y=1 and (-1, 0.5) y=0
        // z = -1.25 and -0.75; loss = (ln(1+e^1.25) + ln(1+e^-0.75)) / 2 + 0.05 * 1.25
        let x = array![[1.0, 2.0], [-1.0, 0.5]];
        let mut m = LinearModel::zeros("y", vec!["a".into(), "b".into()], None, vec![SHARED_KEY.into()]);
        m.set_theta(&[0.5, -1.0, 0.25]);
        let input = ModelInput { features: x.view(), keys: vec![0, 0] };
        let loss = nll_loss(&m, &input, &[1, 0], 0.1).unwrap();
        // 40-digit evaluation: 1.0069000437301364163116...
        assert!((loss - 1.006_900_043_730_136_4).abs() < 1e-14, "{loss}");
        let p = m.predict_proba_input(&input).unwrap();
        assert!((p[0] - 0.222_700_138_825_308_85).abs() < 1e-15);
        assert!((p[1] - 0.320_821_300_824_607_03).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_sign_and_is_deterministic() {
        let ds = line_dataset();
        let cfg = TrainConfig::default();
        let m = fit(&ds, 0, &cfg).unwrap();
        assert!(m.groups[0].weights[0] > 0.0);
        let t = m.training.as_ref().unwrap();
        assert!(t.objective <= t.initial_objective);
        assert_eq!(fit(&ds, 0, &cfg).unwrap(), m);
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = line_dataset();
        let ds = ds.with_labels(Array2::ones((6, 1))).unwrap();
        assert!(matches!(fit(&ds, 0, &TrainConfig::default()), Err(Error::DegenerateLabel(_))));
    }

    #[test]
    fn per_group_model_uses_row_keys() {
        let ds = line_dataset();
        let m = fit_per_group(&ds, 0, "g", &TrainConfig::default()).unwrap();
        assert_eq!(m.keys().collect::<Vec<_>>(), vec!["a", "b"]);
        let p = m.predict(&ds, 0.5).unwrap();
        assert_eq!(p, ds.label_column(0).unwrap());
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let ds = line_dataset();
        let m = fit_per_group(&ds, 0, "g", &TrainConfig::default()).unwrap();
        let back = LinearModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict_proba(&ds).unwrap(), m.predict_proba(&ds).unwrap());
        assert!(LinearModel::from_json("{\"schema_version\":1}").is_err());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let ds = line_dataset();
        let m = LinearModel::zeros("y", vec!["f_0".into(), "f_1".into()], None, vec![SHARED_KEY.into()]);
        assert!(m.predict_proba(&ds).is_err());
        let g = LinearModel::zeros("y", vec!["f_0".into()], Some("g".into()), vec!["a".into()]);
        assert!(matches!(g.predict_proba(&ds), Err(Error::UnknownGroup { .. })));
    }
}
