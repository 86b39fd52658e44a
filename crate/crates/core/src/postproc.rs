//! Equalized-odds post-processing by randomized mixing of predicted labels.
//!
//! Each group gets a pair `(p0, p1)`: a row predicted 0 is output as 1 with
//! probability `p0`, a row predicted 1 with probability `p1`. The privileged
//! category is the reference and keeps the identity `(0, 1)`. Other groups
//! search the grid `k / 100` for the pair whose expected TPR and FPR are
//! closest to the reference's, scored by `|dTPR| + |dFPR|`.
//!
//! Selection over the whole policy: minimize the worst group gap, then
//! maximize expected accuracy, then take the lexicographically smallest
//! `(p0, p1)` in group order. Because the reference is fixed, this splits into
//! per-group choices among grid points whose gap does not exceed the worst
//! group's best gap. All comparisons use exact integer arithmetic.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupSpec;
use crate::error::{Error, Result};
use crate::metrics::{group_confusion, ConfusionCounts};
use crate::rng::SeededRng;

pub const GRID_STEPS: u32 = 100;
pub const GAP_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMixing {
    pub category: String,
    pub p0: f64,
    pub p1: f64,
    /// `|dTPR| + |dFPR|` against the reference on the fitting data.
    pub gap: f64,
}

impl GroupMixing {
    fn identity(category: &str) -> Self {
        Self {
            category: category.to_string(),
            p0: 0.0,
            p1: 1.0,
            gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingPolicy {
    pub attribute: String,
    pub reference: String,
    pub groups: Vec<GroupMixing>,
    pub seed: u64,
    /// Largest fitted gap; above [`GAP_TOLERANCE`] the grid could not
    /// equalize the groups.
    pub max_gap: f64,
    pub within_tolerance: bool,
}

impl MixingPolicy {
    pub fn identity(spec: &GroupSpec, seed: u64) -> Self {
        Self {
            attribute: spec.attribute().to_string(),
            reference: spec.privileged_name().to_string(),
            groups: spec.categories().iter().map(|c| GroupMixing::identity(c)).collect(),
            seed,
            max_gap: 0.0,
            within_tolerance: true,
        }
    }

    pub fn group(&self, category: &str) -> Option<&GroupMixing> {
        self.groups.iter().find(|g| g.category == category)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Integer view of one candidate: gap numerator over a per-group
/// denominator, and expected correct predictions times [`GRID_STEPS`].
#[derive(Debug, Clone, Copy)]
struct Candidate {
    b: u32,
    a: u32,
    gap_num: i128,
    correct: i128,
}

struct GroupGrid {
    gap_den: i128,
    candidates: Vec<Candidate>,
}

fn counts_i(c: &ConfusionCounts) -> (i128, i128, i128, i128) {
    (c.tp as i128, c.fn_ as i128, c.fp as i128, c.tn as i128)
}

fn grid_for(c: &ConfusionCounts, r: &ConfusionCounts) -> GroupGrid {
    let (tp, fn_, fp, tn) = counts_i(c);
    let (rtp, rfn, rfp, rtn) = counts_i(r);
    let (pos, neg) = (tp + fn_, fp + tn);
    let (rpos, rneg) = (rtp + rfn, rfp + rtn);
    let m = GRID_STEPS as i128;
    // dTPR = ((a tp + b fn) rpos - m pos rtp) / (m pos rpos), likewise dFPR.
    // Sum over the common denominator m pos rpos neg rneg.
    let gap_den = m * pos * rpos * neg * rneg;
    let mut candidates = Vec::with_capacity(((GRID_STEPS + 1) * (GRID_STEPS + 1)) as usize);
    for b in 0..=GRID_STEPS {
        for a in 0..=GRID_STEPS {
            let (ai, bi) = (a as i128, b as i128);
            let dt = (ai * tp + bi * fn_) * rpos - m * pos * rtp;
            let df = (ai * fp + bi * tn) * rneg - m * neg * rfp;
            let gap_num = dt.abs() * neg * rneg + df.abs() * pos * rpos;
            let correct = ai * tp + bi * fn_ + (m - ai) * fp + (m - bi) * tn;
            candidates.push(Candidate { b, a, gap_num, correct });
        }
    }
    GroupGrid { gap_den, candidates }
}

/// `x / dx <= y / dy` for positive denominators.
fn frac_le(x: i128, dx: i128, y: i128, dy: i128) -> bool {
    BigInt::from(x) * BigInt::from(dy) <= BigInt::from(y) * BigInt::from(dx)
}

fn confusions(
    labels_true: &[u8],
    labels_pred: &[u8],
    groups: &[usize],
    spec: &GroupSpec,
) -> Result<Vec<ConfusionCounts>> {
    (0..spec.n_categories())
        .map(|k| {
            let c = group_confusion(labels_true, labels_pred, groups, k)?;
            if c.positives() == 0 || c.negatives() == 0 {
                return Err(Error::Unfittable(format!(
                    "group `{}` of `{}` needs both positive and negative true labels",
                    spec.categories()[k],
                    spec.attribute()
                )));
            }
            Ok(c)
        })
        .collect()
}

/// Fits a mixing policy on `labels_pred` against `labels_true`.
pub fn fit_mixing(
    labels_true: &[u8],
    labels_pred: &[u8],
    groups: &[usize],
    spec: &GroupSpec,
) -> Result<MixingPolicy> {
    if labels_true.len() != labels_pred.len() || labels_true.len() != groups.len() {
        return Err(Error::InvalidData("label, prediction and group lengths differ".into()));
    }
    let conf = confusions(labels_true, labels_pred, groups, spec)?;
    let reference = spec.privileged();
    let grids: Vec<Option<GroupGrid>> = conf
        .iter()
        .enumerate()
        .map(|(k, c)| (k != reference).then(|| grid_for(c, &conf[reference])))
        .collect();

    // Best achievable gap per group, then the worst of those.
    let best: Vec<Option<(i128, i128)>> = grids
        .iter()
        .map(|g| {
            g.as_ref().map(|g| {
                let m = g.candidates.iter().map(|c| c.gap_num).min().expect("nonempty grid");
                (m, g.gap_den)
            })
        })
        .collect();
    let worst = best.iter().flatten().copied().fold(None, |acc: Option<(i128, i128)>, x| match acc {
        Some(a) if frac_le(x.0, x.1, a.0, a.1) => Some(a),
        _ => Some(x),
    });

    let mut out = Vec::with_capacity(spec.n_categories());
    let mut max_gap = 0.0f64;
    for (k, grid) in grids.iter().enumerate() {
        let name = &spec.categories()[k];
        let Some(grid) = grid else {
            out.push(GroupMixing::identity(name));
            continue;
        };
        let (wn, wd) = worst.expect("a non-reference group exists");
        // Candidates are enumerated in lexicographic (p0, p1) order, so the
        // first maximum by accuracy is the lexicographically smallest.
        let mut chosen: Option<Candidate> = None;
        for c in &grid.candidates {
            if !frac_le(c.gap_num, grid.gap_den, wn, wd) {
                continue;
            }
            if chosen.is_none_or(|best| c.correct > best.correct) {
                chosen = Some(*c);
            }
        }
        let c = chosen.expect("the group's own optimum satisfies the bound");
        let gap = c.gap_num as f64 / grid.gap_den as f64;
        max_gap = max_gap.max(gap);
        out.push(GroupMixing {
            category: name.clone(),
            p0: f64::from(c.b) / f64::from(GRID_STEPS),
            p1: f64::from(c.a) / f64::from(GRID_STEPS),
            gap,
        });
    }
    Ok(MixingPolicy {
        attribute: spec.attribute().to_string(),
        reference: spec.privileged_name().to_string(),
        groups: out,
        seed: 0,
        max_gap,
        within_tolerance: max_gap <= GAP_TOLERANCE,
    })
}

/// Applies `policy`: one uniform draw per row, output 1 iff the draw is below
/// the row's mixing probability. Group codes index `spec`'s categories.
pub fn apply_mixing(
    labels_pred: &[u8],
    groups: &[usize],
    spec: &GroupSpec,
    policy: &MixingPolicy,
) -> Result<Vec<u8>> {
    if labels_pred.len() != groups.len() {
        return Err(Error::InvalidData("prediction and group lengths differ".into()));
    }
    let per_code: Vec<&GroupMixing> = spec
        .categories()
        .iter()
        .map(|c| {
            policy.group(c).ok_or_else(|| Error::UnknownGroup {
                attribute: spec.attribute().to_string(),
                category: c.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut rng = SeededRng::new(policy.seed);
    labels_pred
        .iter()
        .zip(groups)
        .map(|(&y, &g)| {
            let m = per_code.get(g).ok_or_else(|| Error::InvalidData(format!("group code {g} out of range")))?;
            let p = if y == 1 { m.p1 } else { m.p0 };
            Ok(u8::from(rng.uniform() < p))
        })
        .collect()
}

/// Expected mixed `(TPR, FPR)` of a group under `(p0, p1)`.
pub fn mixed_rates(c: &ConfusionCounts, p0: f64, p1: f64) -> (f64, f64) {
    let tpr = c.tp as f64 / c.positives() as f64;
    let fpr = c.fp as f64 / c.negatives() as f64;
    (p1 * tpr + p0 * (1.0 - tpr), p1 * fpr + p0 * (1.0 - fpr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> GroupSpec {
        GroupSpec::new("g", vec!["a".into(), "b".into()], 0).unwrap()
    }

    /// Rows for one group with the given confusion counts.
    fn rows(g: usize, tp: usize, fn_: usize, fp: usize, tn: usize, out: &mut (Vec<u8>, Vec<u8>, Vec<usize>)) {
        for (t, p, n) in [(1, 1, tp), (1, 0, fn_), (0, 1, fp), (0, 0, tn)] {
            for _ in 0..n {
                out.0.push(t);
                out.1.push(p);
                out.2.push(g);
            }
        }
    }

    #[test]
    fn equalized_predictions_get_identity() {
        let mut d = Default::default();
        rows(0, 8, 2, 1, 9, &mut d);
        rows(1, 4, 1, 2, 18, &mut d);
        let policy = fit_mixing(&d.0, &d.1, &d.2, &spec2()).unwrap();
        assert_eq!(policy, MixingPolicy::identity(&spec2(), 0));
    }

    #[test]
    fn perfect_predictor_gets_identity() {
        let mut d = Default::default();
        rows(0, 5, 0, 0, 5, &mut d);
        rows(1, 3, 0, 0, 7, &mut d);
        let policy = fit_mixing(&d.0, &d.1, &d.2, &spec2()).unwrap();
        assert_eq!(policy.group("b").unwrap().p0, 0.0);
        assert_eq!(policy.group("b").unwrap().p1, 1.0);
    }

    #[test]
    fn tpr_gap_fixture() {
        // reference TPR 0.9 FPR 0.2; group b TPR 0.6 FPR 0.2
        let mut d = Default::default();
        rows(0, 9, 1, 2, 8, &mut d);
        rows(1, 6, 4, 2, 8, &mut d);
        let policy = fit_mixing(&d.0, &d.1, &d.2, &spec2()).unwrap();
        // No grid point beats the identity: raising p0 gains TPR at twice the FPR cost.
        let b = policy.group("b").unwrap();
        assert_eq!((b.p0, b.p1), (0.0, 1.0));
        assert!((b.gap - 0.3).abs() < 1e-12);
        assert!(!policy.within_tolerance);
        assert_eq!(policy.group("a").unwrap(), &GroupMixing::identity("a"));
    }

    #[test]
    fn over_predicting_group_is_mixed_down() {
        // reference TPR 0.6 FPR 0.2; group b TPR 0.9 FPR 0.4
        let mut d = Default::default();
        rows(0, 6, 4, 2, 8, &mut d);
        rows(1, 9, 1, 4, 6, &mut d);
        let policy = fit_mixing(&d.0, &d.1, &d.2, &spec2()).unwrap();
        let b = policy.group("b").unwrap();
        assert_eq!((b.p0, b.p1), (0.0, 0.66));
        assert!((b.gap - 0.07).abs() < 1e-12);
    }

    #[test]
    fn apply_identity_and_all_ones() {
        let spec = spec2();
        let pred = vec![0, 1, 1, 0, 1, 0];
        let groups = vec![0, 0, 1, 1, 1, 0];
        let id = MixingPolicy::identity(&spec, 7);
        assert_eq!(apply_mixing(&pred, &groups, &spec, &id).unwrap(), pred);
        let mut ones = id.clone();
        for g in &mut ones.groups {
            g.p0 = 1.0;
            g.p1 = 1.0;
        }
        assert_eq!(apply_mixing(&pred, &groups, &spec, &ones).unwrap(), vec![1; 6]);
    }

    #[test]
    fn apply_rate_within_binomial_interval() {
        let spec = spec2();
        let mut policy = MixingPolicy::identity(&spec, 11);
        policy.groups[1].p0 = 0.3;
        let pred = vec![0u8; 10_000];
        let groups = vec![1usize; 10_000];
        let out = apply_mixing(&pred, &groups, &spec, &policy).unwrap();
        let frac = out.iter().filter(|&&y| y == 1).count() as f64 / 1e4;
        assert!((frac - 0.3).abs() <= 0.015, "{frac}");
        assert_eq!(out, apply_mixing(&pred, &groups, &spec, &policy).unwrap());
    }

    #[test]
    fn undefined_rates_are_unfittable() {
        let mut d = Default::default();
        rows(0, 3, 1, 0, 0, &mut d);
        rows(1, 2, 2, 1, 1, &mut d);
        assert!(matches!(fit_mixing(&d.0, &d.1, &d.2, &spec2()), Err(Error::Unfittable(_))));
    }

    #[test]
    fn unknown_group_on_apply() {
        let spec = spec2();
        let mut policy = MixingPolicy::identity(&spec, 0);
        policy.groups.pop();
        assert!(matches!(
            apply_mixing(&[1], &[0], &spec, &policy),
            Err(Error::UnknownGroup { .. })
        ));
    }
}
