//! Disparate impact remover: rank-preserving repair of feature distributions.
//!
//! For each repaired feature and each group, the sorted training values define
//! an empirical quantile function with linear interpolation between order
//! statistics at rank fractions `i / (n_g - 1)`. The target distribution takes,
//! at each rank fraction `q`, the median over groups of their `q`-quantiles.
//! A value `x` in group `g` is mapped to its rank fraction `q = F_g(x)` (ties
//! take the midpoint of their run; values outside the training range clamp
//! to 0 or 1) and moved to `(1 - lambda) * x + lambda * median_quantile(q)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{median, TabularDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    lambda: f64,
    pub attribute: String,
    pub feature_subset: Option<Vec<String>>,
}

impl RepairConfig {
    pub fn new(lambda: f64, attribute: impl Into<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidConfig(format!(
                "repair level must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            attribute: attribute.into(),
            feature_subset: None,
        })
    }

    pub fn with_features(mut self, names: Vec<String>) -> Self {
        self.feature_subset = Some(names);
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Sorted sample with an interpolating quantile function and its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalQuantiles {
    sorted: Vec<f64>,
}

impl EmpiricalQuantiles {
    pub fn new(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Self { sorted: values })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        if n == 1 {
            return self.sorted[0];
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        if lo >= n - 1 {
            return self.sorted[n - 1];
        }
        let frac = pos - lo as f64;
        if frac == 0.0 {
            return self.sorted[lo];
        }
        self.sorted[lo] + frac * (self.sorted[lo + 1] - self.sorted[lo])
    }

    /// Rank fraction of `x`: inverse of [`quantile`](Self::quantile), with
    /// tied runs mapped to their midpoint position.
    pub fn rank(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        if n == 1 {
            return 0.5;
        }
        let s = &self.sorted;
        if x < s[0] {
            return 0.0;
        }
        if x > s[n - 1] {
            return 1.0;
        }
        let first_ge = s.partition_point(|&v| v < x);
        let first_gt = s.partition_point(|&v| v <= x);
        let pos = if first_gt > first_ge {
            (first_ge + first_gt - 1) as f64 / 2.0
        } else {
            // strictly between s[first_ge - 1] and s[first_ge]
            let (lo, hi) = (s[first_ge - 1], s[first_ge]);
            (first_ge - 1) as f64 + (x - lo) / (hi - lo)
        };
        pos / (n - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuantiles {
    pub feature: String,
    pub groups: Vec<EmpiricalQuantiles>,
}

impl FeatureQuantiles {
    /// Per-rank median across groups.
    pub fn median_quantile(&self, q: f64) -> f64 {
        let qs: Vec<f64> = self.groups.iter().map(|g| g.quantile(q)).collect();
        median(&qs).expect("at least one group")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub attribute: String,
    pub categories: Vec<String>,
    pub features: Vec<FeatureQuantiles>,
}

impl QuantileTable {
    pub fn feature(&self, name: &str) -> Option<&FeatureQuantiles> {
        self.features.iter().find(|f| f.feature == name)
    }
}

fn column_index(ds: &TabularDataset, name: &str) -> Result<usize> {
    ds.feature_names()
        .iter()
        .position(|f| f == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

pub fn fit_quantiles(ds: &TabularDataset, cfg: &RepairConfig) -> Result<QuantileTable> {
    let col = ds.protected(&cfg.attribute)?;
    let spec = col.spec();
    let counts = col.counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Unfittable(format!(
            "group `{}` of `{}` has no rows",
            spec.categories()[empty],
            cfg.attribute
        )));
    }
    let names: Vec<String> = match &cfg.feature_subset {
        Some(subset) => subset.clone(),
        None => ds.feature_names().to_vec(),
    };
    let mut features = Vec::with_capacity(names.len());
    for name in names {
        let j = column_index(ds, &name)?;
        let mut per_group: Vec<Vec<f64>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        for (i, &g) in col.codes().iter().enumerate() {
            per_group[g].push(ds.features()[[i, j]]);
        }
        features.push(FeatureQuantiles {
            feature: name,
            groups: per_group
                .into_iter()
                .map(|v| EmpiricalQuantiles::new(v).expect("nonempty group"))
                .collect(),
        });
    }
    Ok(QuantileTable {
        attribute: cfg.attribute.clone(),
        categories: spec.categories().to_vec(),
        features,
    })
}

/// Applies a fitted table to `ds`. Labels and protected columns pass through.
pub fn repair(ds: &TabularDataset, table: &QuantileTable, cfg: &RepairConfig) -> Result<TabularDataset> {
    let col = ds.protected(&table.attribute)?;
    let group_of: Vec<usize> = col
        .spec()
        .categories()
        .iter()
        .map(|c| {
            table
                .categories
                .iter()
                .position(|t| t == c)
                .ok_or_else(|| Error::UnknownGroup {
                    attribute: table.attribute.clone(),
                    category: c.clone(),
                })
        })
        .collect::<Result<_>>()?;
    let lambda = cfg.lambda();
    if lambda == 0.0 {
        return Ok(ds.clone());
    }
    let mut features = ds.features().clone();
    for fq in &table.features {
        let j = column_index(ds, &fq.feature)?;
        for (i, &code) in col.codes().iter().enumerate() {
            let x = features[[i, j]];
            let q = fq.groups[group_of[code]].rank(x);
            let target = fq.median_quantile(q);
            features[[i, j]] = (1.0 - lambda) * x + lambda * target;
        }
    }
    ds.with_features(ds.feature_names().to_vec(), features)
}
