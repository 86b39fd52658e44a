//! Seeded synthetic rating datasets with exact group marginals and
//! controllable label bias.
//!
//! Scenarios are read from a flat `key = value` file (`#` starts a comment):
//!
//! | key | meaning |
//! |-----|---------|
//! | `n_talks` | number of rows |
//! | `seed` | generator seed |
//! | `labels` | comma-separated label names (default: the 14 rating labels) |
//! | `group.<attr>` | `cat:count,cat:count,...`; counts must sum to `n_talks` |
//! | `privileged.<attr>` | privileged category (default: first listed) |
//! | `base_rate` | favorable-label probability for every label |
//! | `base_rate.<label>` | per-label override |
//! | `shift.<attr>.<cat>.<label>` | added to the favorable probability; `<label>` may be `*` |
//! | `n_features` | number of group-coupled feature columns |
//! | `coupling` | weight in `[0, 1]` of the group mean vectors in those features |
//! | `feature_noise` | standard deviation of the spherical feature noise |
//! | `signal` | scale of one per-label merit feature; `0` disables them |
//! | `views` | `true`/`false`, emit a log-normal `views` column |
//!
//! Generation draws from [`SeededRng`] in this order: one shuffle of the
//! category multiset per attribute; one standard-normal mean vector per
//! (attribute, category); then per row, the feature noise, and per label a
//! uniform `u` (label is `u < p`), followed by the merit noise when `signal > 0`,
//! and finally one normal for `views`. The favorable probability is
//! `base_rate + sum of matching shifts`, clamped to `[0.01, 0.99]`. The merit
//! feature for a label is `signal * ln((1 - u) / u) + feature_noise * e`,
//! which carries label information but no group information.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::dataset::{DatasetParts, GroupSpec, ProtectedColumn, TabularDataset};
use crate::error::{Error, Result};
use crate::labels::{default_labels, GENDER_CATEGORIES, RACE_CATEGORIES};
use crate::rng::SeededRng;

pub const RATE_FLOOR: f64 = 0.01;
pub const RATE_CEIL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCounts {
    pub attribute: String,
    pub categories: Vec<(String, usize)>,
    pub privileged: usize,
}

impl GroupCounts {
    pub fn new(attribute: &str, categories: &[(&str, usize)]) -> Self {
        Self {
            attribute: attribute.to_string(),
            categories: categories
                .iter()
                .map(|(c, n)| (c.to_string(), *n))
                .collect(),
            privileged: 0,
        }
    }

    fn spec(&self) -> Result<GroupSpec> {
        GroupSpec::new(
            self.attribute.clone(),
            self.categories.iter().map(|(c, _)| c.clone()).collect(),
            self.privileged,
        )
        .map_err(|e| Error::InvalidScenario(e.to_string()))
    }
}

/// Key of a bias shift: (attribute, category, label).
pub type ShiftKey = (String, String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct BiasScenario {
    pub n_talks: usize,
    pub groups: Vec<GroupCounts>,
    pub label_names: Vec<String>,
    pub base_rate: Vec<f64>,
    pub bias_shift: BTreeMap<ShiftKey, f64>,
    pub n_features: usize,
    pub feature_noise: f64,
    pub coupling: f64,
    pub signal: f64,
    pub views: bool,
    pub seed: u64,
}

impl BiasScenario {
    /// Group marginals of the TED talk corpus: 2383 talks, gender
    /// 1596/768/19 and race 1901/210/169/103. No injected bias.
    pub fn ted_marginals(seed: u64) -> Self {
        let gender = [1596, 768, 19];
        let race = [1901, 210, 169, 103];
        Self {
            n_talks: 2383,
            groups: vec![
                GroupCounts::new(
                    "gender",
                    &GENDER_CATEGORIES
                        .iter()
                        .copied()
                        .zip(gender)
                        .collect::<Vec<_>>(),
                ),
                GroupCounts::new(
                    "race",
                    &RACE_CATEGORIES.iter().copied().zip(race).collect::<Vec<_>>(),
                ),
            ],
            label_names: default_labels(),
            base_rate: vec![0.5; 14],
            bias_shift: BTreeMap::new(),
            n_features: 8,
            feature_noise: 1.0,
            coupling: 0.0,
            signal: 0.0,
            views: true,
            seed,
        }
    }

    /// Sets the same shift on every label for one (attribute, category).
    pub fn shift_all_labels(&mut self, attribute: &str, category: &str, shift: f64) {
        for label in &self.label_names {
            self.bias_shift.insert(
                (attribute.to_string(), category.to_string(), label.clone()),
                shift,
            );
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n_talks == 0 {
            return bad("n_talks must be positive".into());
        }
        if self.label_names.is_empty() {
            return bad("at least one label is required".into());
        }
        if self.base_rate.len() != self.label_names.len() {
            return bad(format!(
                "{} base rates for {} labels",
                self.base_rate.len(),
                self.label_names.len()
            ));
        }
        if let Some(r) = self.base_rate.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return bad(format!("base rate {r} outside (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return bad(format!("coupling {} outside [0, 1]", self.coupling));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return bad(format!("feature_noise {} must be nonnegative", self.feature_noise));
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return bad(format!("signal {} must be nonnegative", self.signal));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if self.groups[..i].iter().any(|o| o.attribute == g.attribute) {
                return bad(format!("attribute `{}` declared twice", g.attribute));
            }
            g.spec()?;
            let total: usize = g.categories.iter().map(|(_, n)| n).sum();
            if total != self.n_talks {
                return bad(format!(
                    "counts for `{}` sum to {total}, expected n_talks = {}",
                    g.attribute, self.n_talks
                ));
            }
        }
        for ((attr, cat, label), shift) in &self.bias_shift {
            let Some(g) = self.groups.iter().find(|g| &g.attribute == attr) else {
                return bad(format!("shift names unknown attribute `{attr}`"));
            };
            if !g.categories.iter().any(|(c, _)| c == cat) {
                return bad(format!("shift names unknown category `{attr}.{cat}`"));
            }
            if !self.label_names.contains(label) {
                return bad(format!("shift names unknown label `{label}`"));
            }
            if !(*shift > -1.0 && *shift < 1.0) {
                return bad(format!("shift {shift} outside (-1, 1)"));
            }
        }
        Ok(())
    }

    /// Favorable probability for a row whose category codes are `codes`
    /// (one per attribute, in scenario order).
    pub fn favorable_rate(&self, label: usize, codes: &[usize]) -> f64 {
        let name = &self.label_names[label];
        let mut p = self.base_rate[label];
        for (g, &code) in self.groups.iter().zip(codes) {
            let key = (g.attribute.clone(), g.categories[code].0.clone(), name.clone());
            p += self.bias_shift.get(&key).copied().unwrap_or(0.0);
        }
        p.clamp(RATE_FLOOR, RATE_CEIL)
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut kv: Vec<(String, String)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidScenario(format!("line {}: expected key = value", lineno + 1))
            })?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }

        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidScenario(format!("`{key}`: cannot parse `{v}`")))
        }

        let mut label_names = default_labels();
        if let Some((_, v)) = kv.iter().find(|(k, _)| k == "labels") {
            label_names = v.split(',').map(|s| s.trim().to_string()).collect();
        }
        let mut scenario = Self {
            n_talks: 0,
            groups: Vec::new(),
            base_rate: vec![0.5; label_names.len()],
            label_names,
            bias_shift: BTreeMap::new(),
            n_features: 8,
            feature_noise: 1.0,
            coupling: 0.0,
            signal: 0.0,
            views: true,
            seed: 0,
        };
        let mut privileged: Vec<(String, String)> = Vec::new();
        let mut per_label_rates: Vec<(String, f64)> = Vec::new();

        for (k, v) in &kv {
            let parts: Vec<&str> = k.split('.').collect();
            match parts.as_slice() {
                ["labels"] => {}
                ["n_talks"] => scenario.n_talks = num(k, v)?,
                ["seed"] => scenario.seed = num(k, v)?,
                ["n_features"] => scenario.n_features = num(k, v)?,
                ["feature_noise"] => scenario.feature_noise = num(k, v)?,
                ["coupling"] => scenario.coupling = num(k, v)?,
                ["signal"] => scenario.signal = num(k, v)?,
                ["views"] => scenario.views = num(k, v)?,
                ["base_rate"] => {
                    let r: f64 = num(k, v)?;
                    scenario.base_rate.iter_mut().for_each(|b| *b = r);
                }
                ["base_rate", label] => per_label_rates.push((label.to_string(), num(k, v)?)),
                ["group", attr] => {
                    let mut categories = Vec::new();
                    for item in v.split(',') {
                        let (cat, count) = item.split_once(':').ok_or_else(|| {
                            Error::InvalidScenario(format!("`{k}`: expected cat:count, got `{item}`"))
                        })?;
                        categories.push((cat.trim().to_lowercase(), num(k, count.trim())?));
                    }
                    scenario.groups.push(GroupCounts {
                        attribute: attr.to_string(),
                        categories,
                        privileged: 0,
                    });
                }
                ["privileged", attr] => privileged.push((attr.to_string(), v.to_lowercase())),
                ["shift", attr, cat, label] => {
                    let s: f64 = num(k, v)?;
                    let labels: Vec<String> = if *label == "*" {
                        scenario.label_names.clone()
                    } else {
                        vec![label.to_string()]
                    };
                    for l in labels {
                        scenario
                            .bias_shift
                            .insert((attr.to_string(), cat.to_lowercase(), l), s);
                    }
                }
                _ => return Err(Error::InvalidScenario(format!("unknown key `{k}`"))),
            }
        }
        for (label, rate) in per_label_rates {
            let j = scenario
                .label_names
                .iter()
                .position(|l| *l == label)
                .ok_or_else(|| Error::InvalidScenario(format!("unknown label `{label}`")))?;
            scenario.base_rate[j] = rate;
        }
        for (attr, cat) in privileged {
            let g = scenario
                .groups
                .iter_mut()
                .find(|g| g.attribute == attr)
                .ok_or_else(|| Error::InvalidScenario(format!("unknown attribute `{attr}`")))?;
            g.privileged = g
                .categories
                .iter()
                .position(|(c, _)| *c == cat)
                .ok_or_else(|| Error::InvalidScenario(format!("unknown category `{attr}.{cat}`")))?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_config_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the config format; `from_config_str` reads it back unchanged.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("n_talks", self.n_talks.to_string());
        line("seed", self.seed.to_string());
        line("labels", self.label_names.join(","));
        for g in &self.groups {
            let cats: Vec<String> = g.categories.iter().map(|(c, n)| format!("{c}:{n}")).collect();
            line(&format!("group.{}", g.attribute), cats.join(","));
            line(
                &format!("privileged.{}", g.attribute),
                g.categories[g.privileged].0.clone(),
            );
        }
        for (label, rate) in self.label_names.iter().zip(&self.base_rate) {
            line(&format!("base_rate.{label}"), rate.to_string());
        }
        for ((a, c, l), s) in &self.bias_shift {
            line(&format!("shift.{a}.{c}.{l}"), s.to_string());
        }
        line("n_features", self.n_features.to_string());
        line("coupling", self.coupling.to_string());
        line("feature_noise", self.feature_noise.to_string());
        line("signal", self.signal.to_string());
        line("views", self.views.to_string());
        out
    }
}

pub fn generate(scenario: &BiasScenario) -> Result<TabularDataset> {
    scenario.validate()?;
    let n = scenario.n_talks;
    let d = scenario.n_features;
    let n_labels = scenario.label_names.len();
    let mut rng = SeededRng::new(scenario.seed);

    let mut protected = Vec::new();
    let mut codes_by_attr: Vec<Vec<usize>> = Vec::new();
    for g in &scenario.groups {
        let mut codes: Vec<usize> = g
            .categories
            .iter()
            .enumerate()
            .flat_map(|(i, (_, count))| std::iter::repeat_n(i, *count))
            .collect();
        rng.shuffle(&mut codes);
        protected.push(ProtectedColumn::new(g.spec()?, codes.clone())?);
        codes_by_attr.push(codes);
    }

    let means: Vec<Vec<Vec<f64>>> = scenario
        .groups
        .iter()
        .map(|g| {
            (0..g.categories.len())
                .map(|_| (0..d).map(|_| rng.normal()).collect())
                .collect()
        })
        .collect();

    let n_merit = if scenario.signal > 0.0 { n_labels } else { 0 };
    let mut features = Array2::zeros((n, d + n_merit));
    let mut labels = Array2::zeros((n, n_labels));
    let mut views = Vec::with_capacity(if scenario.views { n } else { 0 });
    let mut row_codes = vec![0usize; scenario.groups.len()];

    for i in 0..n {
        for (a, codes) in codes_by_attr.iter().enumerate() {
            row_codes[a] = codes[i];
        }
        for k in 0..d {
            let mean: f64 = means
                .iter()
                .zip(&row_codes)
                .map(|(m, &c)| m[c][k])
                .sum();
            features[[i, k]] = scenario.coupling * mean + scenario.feature_noise * rng.normal();
        }
        for j in 0..n_labels {
            let p = scenario.favorable_rate(j, &row_codes);
            let u = rng.uniform();
            labels[[i, j]] = u8::from(u < p);
            if n_merit > 0 {
                let u = u.max(f64::MIN_POSITIVE);
                features[[i, d + j]] = scenario.signal * ((1.0 - u) / u).ln()
                    + scenario.feature_noise * rng.normal();
            }
        }
        if scenario.views {
            views.push((13.0 + rng.normal()).exp().round());
        }
    }

    let width = (n as f64).log10().floor() as usize + 1;
    TabularDataset::new(DatasetParts {
        ids: (0..n).map(|i| format!("talk{:0width$}", i, width = width)).collect(),
        feature_names: (0..d + n_merit).map(|k| format!("f_{k}")).collect(),
        features,
        protected,
        label_names: scenario.label_names.clone(),
        raw_ratings: None,
        labels: Some(labels),
        views: scenario.views.then_some(views),
        transcripts: None,
    })
}
