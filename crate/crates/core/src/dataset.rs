//! Tabular dataset model plus the normalization, scaling, binarization and
//! splitting steps applied before any fairness analysis.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// One protected attribute: its ordered categories and which one is privileged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    attribute: String,
    categories: Vec<String>,
    privileged: usize,
}

impl GroupSpec {
    pub fn new(
        attribute: impl Into<String>,
        categories: Vec<String>,
        privileged: usize,
    ) -> Result<Self> {
        let attribute = attribute.into();
        if categories.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "attribute `{attribute}` declares no categories"
            )));
        }
        for (i, c) in categories.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "attribute `{attribute}` has an empty category name"
                )));
            }
            if categories[..i].contains(c) {
                return Err(Error::InvalidConfig(format!(
                    "attribute `{attribute}` repeats category `{c}`"
                )));
            }
        }
        if privileged >= categories.len() {
            return Err(Error::InvalidConfig(format!(
                "privileged index {privileged} out of range for `{attribute}`"
            )));
        }
        Ok(Self {
            attribute,
            categories,
            privileged,
        })
    }

    /// Builds a spec, naming the privileged category instead of indexing it.
    pub fn with_privileged(
        attribute: impl Into<String>,
        categories: Vec<String>,
        privileged: &str,
    ) -> Result<Self> {
        let attribute = attribute.into();
        let idx = categories
            .iter()
            .position(|c| c == privileged)
            .ok_or_else(|| Error::UnknownGroup {
                attribute: attribute.clone(),
                category: privileged.to_string(),
            })?;
        Self::new(attribute, categories, idx)
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn privileged(&self) -> usize {
        self.privileged
    }

    pub fn privileged_name(&self) -> &str {
        &self.categories[self.privileged]
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Same categories, different privileged category.
    pub fn reprivileged(&self, privileged: &str) -> Result<Self> {
        Self::with_privileged(self.attribute.clone(), self.categories.clone(), privileged)
    }
}

/// A protected attribute column: spec plus one category code per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedColumn {
    spec: GroupSpec,
    codes: Vec<usize>,
}

impl ProtectedColumn {
    pub fn new(spec: GroupSpec, codes: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = codes.iter().find(|&&c| c >= spec.n_categories()) {
            return Err(Error::InvalidData(format!(
                "code {bad} is not a declared category of `{}`",
                spec.attribute()
            )));
        }
        Ok(Self { spec, codes })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn category_of(&self, row: usize) -> &str {
        &self.spec.categories()[self.codes[row]]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.spec.n_categories()];
        for &c in &self.codes {
            counts[c] += 1;
        }
        counts
    }
}

/// Inputs for [`TabularDataset::new`]; all invariants are checked there.
#[derive(Debug, Clone, Default)]
pub struct DatasetParts {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub protected: Vec<ProtectedColumn>,
    pub label_names: Vec<String>,
    pub raw_ratings: Option<Array2<f64>>,
    pub labels: Option<Array2<u8>>,
    pub views: Option<Vec<f64>>,
    pub transcripts: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    ids: Vec<String>,
    feature_names: Vec<String>,
    features: Array2<f64>,
    protected: BTreeMap<String, ProtectedColumn>,
    label_names: Vec<String>,
    raw_ratings: Option<Array2<f64>>,
    labels: Option<Array2<u8>>,
    views: Option<Vec<f64>>,
    transcripts: Option<Vec<String>>,
}

impl TabularDataset {
    pub fn new(parts: DatasetParts) -> Result<Self> {
        let n = parts.ids.len();
        let shape_err = |what: &str, found: usize| {
            Error::InvalidData(format!("{what} has {found} rows, expected {n}"))
        };
        if parts.features.nrows() != n {
            return Err(shape_err("feature matrix", parts.features.nrows()));
        }
        if parts.features.ncols() != parts.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: parts.feature_names.len(),
                found: parts.features.ncols(),
            });
        }
        if parts.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        let mut protected = BTreeMap::new();
        for col in parts.protected {
            if col.codes.len() != n {
                return Err(shape_err(col.spec.attribute(), col.codes.len()));
            }
            let name = col.spec.attribute().to_string();
            if protected.insert(name.clone(), col).is_some() {
                return Err(Error::InvalidData(format!(
                    "protected attribute `{name}` given twice"
                )));
            }
        }
        let n_labels = parts.label_names.len();
        if let Some(raw) = &parts.raw_ratings {
            if raw.nrows() != n {
                return Err(shape_err("raw rating matrix", raw.nrows()));
            }
            if raw.ncols() != n_labels {
                return Err(Error::DimensionMismatch {
                    expected: n_labels,
                    found: raw.ncols(),
                });
            }
            if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidData(
                    "raw ratings must be finite and nonnegative".into(),
                ));
            }
        }
        if let Some(labels) = &parts.labels {
            if labels.nrows() != n {
                return Err(shape_err("label matrix", labels.nrows()));
            }
            if labels.ncols() != n_labels {
                return Err(Error::DimensionMismatch {
                    expected: n_labels,
                    found: labels.ncols(),
                });
            }
            if labels.iter().any(|&v| v > 1) {
                return Err(Error::InvalidData("labels must be 0 or 1".into()));
            }
        }
        if let Some(views) = &parts.views {
            if views.len() != n {
                return Err(shape_err("views column", views.len()));
            }
            if views.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidData(
                    "views must be finite and nonnegative".into(),
                ));
            }
        }
        if let Some(t) = &parts.transcripts {
            if t.len() != n {
                return Err(shape_err("transcript column", t.len()));
            }
        }
        // row-major so that rows are contiguous slices
        let features = if parts.features.is_standard_layout() {
            parts.features
        } else {
            parts.features.as_standard_layout().into_owned()
        };
        Ok(Self {
            ids: parts.ids,
            feature_names: parts.feature_names,
            features,
            protected,
            label_names: parts.label_names,
            raw_ratings: parts.raw_ratings,
            labels: parts.labels,
            views: parts.views,
            transcripts: parts.transcripts,
        })
    }

    pub fn into_parts(self) -> DatasetParts {
        DatasetParts {
            ids: self.ids,
            feature_names: self.feature_names,
            features: self.features,
            protected: self.protected.into_values().collect(),
            label_names: self.label_names,
            raw_ratings: self.raw_ratings,
            labels: self.labels,
            views: self.views,
            transcripts: self.transcripts,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn raw_ratings(&self) -> Option<&Array2<f64>> {
        self.raw_ratings.as_ref()
    }

    pub fn labels(&self) -> Option<&Array2<u8>> {
        self.labels.as_ref()
    }

    pub fn views(&self) -> Option<&[f64]> {
        self.views.as_deref()
    }

    pub fn transcripts(&self) -> Option<&[String]> {
        self.transcripts.as_deref()
    }

    pub fn protected_columns(&self) -> impl Iterator<Item = &ProtectedColumn> {
        self.protected.values()
    }

    pub fn protected(&self, attribute: &str) -> Result<&ProtectedColumn> {
        self.protected
            .get(attribute)
            .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.label_names
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownColumn(format!("l_{name}")))
    }

    /// Binary label column `j`, failing if the dataset carries no labels.
    pub fn label_column(&self, j: usize) -> Result<Vec<u8>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidData("dataset has no binary labels".into()))?;
        if j >= labels.ncols() {
            return Err(Error::DimensionMismatch {
                expected: labels.ncols(),
                found: j,
            });
        }
        Ok(labels.column(j).to_vec())
    }

    /// Dataset restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let pick_vec = |v: &Vec<f64>| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
        Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: self.features.select(Axis(0), rows),
            protected: self
                .protected
                .iter()
                .map(|(k, col)| {
                    let codes = rows.iter().map(|&r| col.codes[r]).collect();
                    (
                        k.clone(),
                        ProtectedColumn {
                            spec: col.spec.clone(),
                            codes,
                        },
                    )
                })
                .collect(),
            label_names: self.label_names.clone(),
            raw_ratings: self.raw_ratings.as_ref().map(|m| m.select(Axis(0), rows)),
            labels: self.labels.as_ref().map(|m| m.select(Axis(0), rows)),
            views: self.views.as_ref().map(pick_vec),
            transcripts: self
                .transcripts
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r].clone()).collect()),
        }
    }

    /// Replaces the feature block, keeping everything else.
    pub fn with_features(&self, names: Vec<String>, features: Array2<f64>) -> Result<Self> {
        let mut parts = self.clone().into_parts();
        parts.feature_names = names;
        parts.features = features;
        Self::new(parts)
    }

    pub fn with_labels(&self, labels: Array2<u8>) -> Result<Self> {
        let mut parts = self.clone().into_parts();
        parts.labels = Some(labels);
        Self::new(parts)
    }

    /// Replaces the spec of a protected attribute (e.g. to change the
    /// privileged category) while keeping the category codes.
    pub fn with_group_spec(&self, spec: GroupSpec) -> Result<Self> {
        let current = self.protected(spec.attribute())?;
        if current.spec.categories() != spec.categories() {
            return Err(Error::InvalidConfig(format!(
                "categories for `{}` do not match the dataset",
                spec.attribute()
            )));
        }
        let mut out = self.clone();
        out.protected.insert(
            spec.attribute().to_string(),
            ProtectedColumn {
                spec,
                codes: current.codes.clone(),
            },
        );
        Ok(out)
    }
}

/// Min-max scaling to `[0, 1]`. A constant input maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidData("cannot normalize an empty column".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in column".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; values.len()]);
    }
    let span = max - min;
    Ok(values.iter().map(|v| (v - min) / span).collect())
}

/// Divides every rating row by its total so each row sums to one.
pub fn scale_ratings(raw: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = raw.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData(format!(
                "row {i} has a negative or non-finite count"
            )));
        }
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(Error::DegenerateRow { row: i });
        }
        row.mapv_inplace(|v| v / total);
    }
    Ok(out)
}

/// Median with the even-length convention of averaging the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Per-column median threshold; a cell becomes 1 only if strictly above it.
pub fn binarize_by_median(scaled: &Array2<f64>) -> Result<Array2<u8>> {
    if scaled.nrows() == 0 {
        return Err(Error::InsufficientData("cannot binarize zero rows".into()));
    }
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in rating matrix".into()));
    }
    let mut out = Array2::zeros(scaled.raw_dim());
    for (j, col) in scaled.columns().into_iter().enumerate() {
        let threshold = median(&col.to_vec()).expect("nonempty column");
        for (i, &v) in col.iter().enumerate() {
            out[[i, j]] = u8::from(v > threshold);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test fraction must lie strictly between 0 and 1, got {test_fraction}"
            )));
        }
        Ok(Self {
            test_fraction,
            seed,
        })
    }

    /// Number of test rows: `round(fraction * n)`, kept within `[1, n - 1]`.
    pub fn test_size(&self, n: usize) -> usize {
        let size = (self.test_fraction * n as f64).round() as usize;
        size.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Row indices of a seeded split; each side is sorted ascending.
pub fn split_indices(n: usize, cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rows to split, found {n}"
        )));
    }
    SplitConfig::new(cfg.test_fraction, cfg.seed)?;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(cfg.seed).shuffle(&mut order);
    let n_test = cfg.test_size(n);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Seeded train/test partition. Returns `(train, test)`.
pub fn train_test_split(
    ds: &TabularDataset,
    cfg: &SplitConfig,
) -> Result<(TabularDataset, TabularDataset)> {
    let (train, test) = split_indices(ds.n_rows(), cfg)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn toy(n: usize) -> TabularDataset {
        let spec = GroupSpec::new("g", vec!["a".into(), "b".into()], 0).unwrap();
        TabularDataset::new(DatasetParts {
            ids: (0..n).map(|i| format!("t{i}")).collect(),
            feature_names: vec!["f_0".into()],
            features: Array2::from_shape_fn((n, 1), |(i, _)| i as f64),
            protected: vec![ProtectedColumn::new(spec, (0..n).map(|i| i % 2).collect()).unwrap()],
            label_names: vec!["x".into()],
            labels: Some(Array2::from_shape_fn((n, 1), |(i, _)| (i % 3 == 0) as u8)),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[5.0]).unwrap(), vec![0.0]);
        assert_eq!(minmax_normalize(&[7.0, 7.0, 7.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(minmax_normalize(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn minmax_rejects_non_finite_and_empty() {
        assert!(matches!(
            minmax_normalize(&[1.0, f64::NAN]),
            Err(Error::InvalidData(_))
        ));
        assert!(minmax_normalize(&[f64::INFINITY]).is_err());
        assert!(minmax_normalize(&[]).is_err());
    }

    #[test]
    fn scale_examples() {
        let mut raw = Array2::zeros((3, 14));
        raw[[0, 0]] = 3.0;
        raw[[0, 1]] = 1.0;
        raw.row_mut(1).fill(1.0);
        raw[[2, 0]] = 2498.0;
        raw[[2, 13]] = 1102.0;
        let s = scale_ratings(&raw).unwrap();
        assert_eq!(s[[0, 0]], 0.75);
        assert_eq!(s[[0, 1]], 0.25);
        for j in 0..14 {
            assert_eq!(s[[1, j]], 1.0 / 14.0);
        }
        assert_abs_diff_eq!(s[[2, 0]], 2498.0 / 3600.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[2, 0]], 0.693_888_888_888_9, epsilon = 1e-12);
        assert_abs_diff_eq!(s[[2, 13]], 0.306_111_111_111_1, epsilon = 1e-12);
    }

    #[test]
    fn scale_names_the_zero_row() {
        let mut raw = Array2::ones((3, 14));
        raw.row_mut(2).fill(0.0);
        match scale_ratings(&raw) {
            Err(Error::DegenerateRow { row }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binarize_examples() {
        let b = binarize_by_median(&array![[0.1], [0.2], [0.3]]).unwrap();
        assert_eq!(b.column(0).to_vec(), vec![0, 0, 1]);
        let b = binarize_by_median(&array![[0.3], [0.3], [0.3], [0.3]]).unwrap();
        assert_eq!(b.column(0).to_vec(), vec![0, 0, 0, 0]);
        let b = binarize_by_median(&array![[0.4], [0.6]]).unwrap();
        assert_eq!(b.column(0).to_vec(), vec![0, 1]);
    }

    #[test]
    fn split_examples() {
        let ds = toy(10);
        let cfg = SplitConfig::new(0.2, 7).unwrap();
        let (train, test) = train_test_split(&ds, &cfg).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (8, 2));
        let (train2, test2) = train_test_split(&ds, &cfg).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);

        let (a, b) = train_test_split(&toy(2), &SplitConfig::new(0.5, 1).unwrap()).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (1, 1));

        let cfg = SplitConfig::new(0.2, 0).unwrap();
        let (train, test) = split_indices(2383, &cfg).unwrap();
        assert_eq!((train.len(), test.len()), (1906, 477));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            train_test_split(&toy(1), &SplitConfig { test_fraction: 0.5, seed: 0 }),
            Err(Error::InsufficientData(_))
        ));
        assert!(SplitConfig::new(0.0, 0).is_err());
        assert!(SplitConfig::new(1.0, 0).is_err());
    }

    #[test]
    fn group_spec_validation() {
        assert!(GroupSpec::new("g", vec![], 0).is_err());
        assert!(GroupSpec::new("g", vec!["a".into(), "a".into()], 0).is_err());
        assert!(GroupSpec::new("g", vec!["a".into()], 1).is_err());
        let s = GroupSpec::with_privileged("g", vec!["a".into(), "b".into()], "b").unwrap();
        assert_eq!(s.privileged(), 1);
        assert!(ProtectedColumn::new(s, vec![0, 2]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let mut parts = toy(4).into_parts();
        parts.labels = Some(Array2::from_elem((4, 1), 2));
        assert!(TabularDataset::new(parts).is_err());
        let mut parts = toy(4).into_parts();
        parts.label_names = vec!["x".into()];
        parts.raw_ratings = Some(Array2::from_elem((4, 1), -1.0));
        assert!(TabularDataset::new(parts).is_err());
    }

    proptest! {
        #[test]
        fn minmax_range_and_idempotence(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let once = minmax_normalize(&values).unwrap();
            prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
            let twice = minmax_normalize(&once).unwrap();
            let nondegenerate = once.iter().any(|&v| v != 0.0);
            if nondegenerate {
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }

        #[test]
        fn scale_rows_sum_to_one_and_ignore_row_scale(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1e4, 14), 1..10),
            factor in 1e-3f64..1e3,
        ) {
            let n = rows.len();
            let mut raw = Array2::from_shape_vec((n, 14), rows.concat()).unwrap();
            for mut r in raw.rows_mut() {
                r[0] += 1.0;
            }
            let s = scale_ratings(&raw).unwrap();
            for r in s.rows() {
                prop_assert!((r.sum() - 1.0).abs() <= 1e-12);
            }
            let s2 = scale_ratings(&raw.mapv(|v| v * factor)).unwrap();
            for (a, b) in s.iter().zip(s2.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn binarize_commutes_with_row_permutation(
            values in prop::collection::vec(0.0f64..1.0, 2..30),
            seed in any::<u64>(),
        ) {
            let n = values.len();
            let m = Array2::from_shape_vec((n, 1), values).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            SeededRng::new(seed).shuffle(&mut perm);
            let permuted = m.select(Axis(0), &perm);
            let a = binarize_by_median(&m).unwrap();
            let b = binarize_by_median(&permuted).unwrap();
            prop_assert_eq!(a.select(Axis(0), &perm), b);
            prop_assert!(a.iter().filter(|&&v| v == 1).count() <= n / 2);
        }

        #[test]
        fn split_partitions_rows(n in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let cfg = SplitConfig::new(frac, seed).unwrap();
            let (train, test) = split_indices(n, &cfg).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(test.len(), cfg.test_size(n));
        }
    }
}
