//! Krippendorff's alpha for nominal annotations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Items by raters grid of nominal codes; `None` marks a missing annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    codes: Vec<Vec<Option<String>>>,
    n_raters: usize,
}

impl AnnotationTable {
    pub fn new(codes: Vec<Vec<Option<String>>>) -> Result<Self> {
        let n_raters = codes.first().map_or(0, Vec::len);
        if codes.iter().any(|row| row.len() != n_raters) {
            return Err(Error::InvalidData("ragged annotation table".into()));
        }
        let pairable = codes
            .iter()
            .any(|row| row.iter().filter(|c| c.is_some()).count() >= 2);
        if !pairable {
            return Err(Error::InsufficientData(
                "no item has two or more annotations".into(),
            ));
        }
        Ok(Self { codes, n_raters })
    }

    /// Convenience constructor from string slices; empty strings are missing.
    pub fn from_rows(rows: &[&[&str]]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|c| (!c.is_empty()).then(|| c.to_string()))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn n_items(&self) -> usize {
        self.codes.len()
    }

    pub fn n_raters(&self) -> usize {
        self.n_raters
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.codes
    }
}

/// Nominal alpha, `1 - D_o / D_e`, from the coincidence matrix of pairable
/// values. Items with fewer than two codes are skipped. Returns exactly 1
/// when all pairable values are identical.
pub fn krippendorff_alpha(table: &AnnotationTable) -> f64 {
    // o[c][k] accumulates 1/(m_u - 1) for every ordered pair of values in a unit.
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for row in table.rows() {
        if row.iter().filter(|c| c.is_some()).count() < 2 {
            continue;
        }
        for c in row.iter().flatten() {
            let next = index.len();
            index.entry(c.as_str()).or_insert(next);
        }
    }
    let k = index.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for row in table.rows() {
        let m = row.iter().flatten().count();
        if m < 2 {
            continue;
        }
        let values: Vec<usize> = row.iter().flatten().map(|c| index[c.as_str()]).collect();
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let observed: f64 = (0..k)
        .flat_map(|c| (0..k).filter(move |&d| d != c).map(move |d| (c, d)))
        .map(|(c, d)| coincidence[c][d])
        .sum();
    let expected: f64 = (0..k)
        .flat_map(|c| (0..k).filter(move |&d| d != c).map(move |d| (c, d)))
        .map(|(c, d)| marginals[c] * marginals[d])
        .sum();
    if expected == 0.0 {
        return 1.0;
    }
    1.0 - (n - 1.0) * observed / expected
}
