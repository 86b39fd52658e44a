//! Library results against independent brute-force oracles.

use fairaudit::agreement::{krippendorff_alpha, AnnotationTable};
use fairaudit::metrics::{disparate_impact, group_confusion, statistical_parity_difference, Measure};
use fairaudit::postproc::{fit_mixing, GRID_STEPS};
use fairaudit::rng::SeededRng;
use fairaudit::GroupSpec;
use num_rational::BigRational;
use proptest::prelude::*;

fn spec(k: usize, privileged: usize) -> GroupSpec {
    GroupSpec::new("g", (0..k).map(|i| format!("c{i}")).collect(), privileged).unwrap()
}

fn counted_rate(labels: &[u8], groups: &[usize], g: usize) -> Option<f64> {
    let mut pos = 0usize;
    let mut tot = 0usize;
    for i in 0..labels.len() {
        if groups[i] == g {
            tot += 1;
            if labels[i] == 1 {
                pos += 1;
            }
        }
    }
    if tot == 0 {
        None
    } else {
        Some(pos as f64 / tot as f64)
    }
}

#[test]
fn metrics_equal_counting_oracle() {
    let mut rng = SeededRng::new(20);
    for _ in 0..200 {
        let n = 1 + rng.below(50);
        let k = 2 + rng.below(3);
        let p = rng.below(k);
        let s = spec(k, p);
        let groups: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < 0.4)).collect();
        let preds: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < 0.5)).collect();
        let f = disparate_impact(&labels, &groups, &s);
        let rp = counted_rate(&labels, &groups, p);
        let mut min_di: Option<f64> = None;
        for u in (0..k).filter(|&u| u != p) {
            let pair = f.pairs.iter().find(|x| x.unprivileged == format!("c{u}")).unwrap();
            let ru = counted_rate(&labels, &groups, u);
            let expected = match (ru, rp) {
                (Some(a), Some(b)) if b != 0.0 => Some(a / b),
                _ => None,
            };
            assert_eq!(pair.disparate_impact.value(), expected);
            if let Some(v) = expected {
                min_di = Some(min_di.map_or(v, |m| m.min(v)));
            }
            match (ru, rp) {
                (Some(a), Some(b)) => {
                    assert_eq!(pair.statistical_parity_difference, Measure::Value(a - b));
                    assert_eq!(statistical_parity_difference(&labels, &groups, &s, u).unwrap(), a - b);
                }
                _ => assert!(statistical_parity_difference(&labels, &groups, &s, u).is_err()),
            }
        }
        assert_eq!(f.summary(), min_di);
        for g in 0..k {
            let mut c = [0usize; 4];
            for i in 0..n {
                if groups[i] == g {
                    c[usize::from(labels[i]) * 2 + usize::from(preds[i])] += 1;
                }
            }
            match group_confusion(&labels, &preds, &groups, g) {
                Ok(cc) => assert_eq!([cc.tn, cc.fp, cc.fn_, cc.tp], c),
                Err(_) => assert_eq!(c.iter().sum::<usize>(), 0),
            }
        }
    }
}

/// Alpha from ordered within-item pairs, without a coincidence matrix.
fn pairwise_alpha(rows: &[Vec<Option<String>>]) -> f64 {
    let units: Vec<Vec<&String>> = rows
        .iter()
        .map(|r| r.iter().flatten().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let values: Vec<&String> = units.iter().flatten().copied().collect();
    let n = values.len() as f64;
    let mut d_o = 0.0;
    for u in &units {
        let m = u.len() as f64;
        let mut disagree = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    disagree += 1.0;
                }
            }
        }
        d_o += disagree / (m - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j && values[i] != values[j] {
                d_e += 1.0;
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

/// Krippendorff's reliability data example: 4 observers, 12 units, values
/// 1 to 5, with missing entries. Laid out unit by unit.
fn canonical_table() -> AnnotationTable {
    let a = ["1", "2", "3", "3", "2", "1", "4", "1", "2", "", "", ""];
    let b = ["1", "2", "3", "3", "2", "2", "4", "1", "2", "5", "", "3"];
    let c = ["", "3", "3", "3", "2", "3", "4", "2", "2", "5", "1", ""];
    let d = ["1", "2", "3", "3", "2", "4", "4", "1", "2", "5", "1", ""];
    let rows: Vec<Vec<&str>> = (0..12).map(|u| vec![a[u], b[u], c[u], d[u]]).collect();
    let refs: Vec<&[&str]> = rows.iter().map(Vec::as_slice).collect();
    AnnotationTable::from_rows(&refs).unwrap()
}

#[test]
fn krippendorff_matches_pairwise_oracle_and_published_value() {
    let t = canonical_table();
    let alpha = krippendorff_alpha(&t);
    assert!((alpha - pairwise_alpha(t.rows())).abs() < 1e-9, "{alpha}");
    assert!((alpha - 0.743).abs() < 5e-4, "{alpha}");
}

proptest! {
    #[test]
    fn krippendorff_random_tables(cells in prop::collection::vec(prop::collection::vec(0u8..4, 3), 2..15)) {
        // code 0 is a missing annotation
        let rows: Vec<Vec<Option<String>>> = cells
            .iter()
            .map(|r| r.iter().map(|&c| (c > 0).then(|| c.to_string())).collect())
            .collect();
        let Ok(t) = AnnotationTable::new(rows.clone()) else { return Ok(()) };
        let alpha = krippendorff_alpha(&t);
        let oracle = pairwise_alpha(&rows);
        if oracle.is_finite() {
            prop_assert!((alpha - oracle).abs() < 1e-9);
        } else {
            prop_assert_eq!(alpha, 1.0);
        }
    }
}

/// Exhaustive joint search over the full grid of a two-group policy,
/// in exact rationals, straight from the definitions.
fn exhaustive_two_group(labels: &[u8], preds: &[u8], groups: &[usize]) -> (u32, u32) {
    let int = |v: usize| BigRational::from_integer(v.into());
    let rates = |g: usize| {
        let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
        for i in 0..labels.len() {
            if groups[i] != g {
                continue;
            }
            match (labels[i], preds[i]) {
                (1, 1) => tp += 1,
                (1, _) => fn_ += 1,
                (_, 1) => fp += 1,
                _ => tn += 1,
            }
        }
        (tp, fn_, fp, tn)
    };
    let (rtp, rfn, rfp, rtn) = rates(0);
    let ref_tpr = int(rtp) / int(rtp + rfn);
    let ref_fpr = int(rfp) / int(rfp + rtn);
    let (tp, fn_, fp, tn) = rates(1);
    let tpr = int(tp) / int(tp + fn_);
    let fpr = int(fp) / int(fp + tn);
    let one = int(1);
    let steps = int(GRID_STEPS as usize);
    let mut best: Option<(BigRational, BigRational, u32, u32)> = None;
    for b in 0..=GRID_STEPS {
        for a in 0..=GRID_STEPS {
            let p0 = int(b as usize) / steps.clone();
            let p1 = int(a as usize) / steps.clone();
            let mt = p1.clone() * tpr.clone() + p0.clone() * (one.clone() - tpr.clone());
            let mf = p1.clone() * fpr.clone() + p0.clone() * (one.clone() - fpr.clone());
            let abs = |x: BigRational| if x < int(0) { -x } else { x };
            let gap = abs(mt - ref_tpr.clone()) + abs(mf - ref_fpr.clone());
            // reference rows are always correct-as-predicted; only group 1 varies
            let acc = p1.clone() * int(tp) + p0.clone() * int(fn_)
                + (one.clone() - p1) * int(fp)
                + (one.clone() - p0) * int(tn);
            let better = match &best {
                None => true,
                Some((bg, bacc, _, _)) => gap < *bg || (gap == *bg && acc > *bacc),
            };
            if better {
                best = Some((gap, acc, b, a));
            }
        }
    }
    let (_, _, b, a) = best.unwrap();
    (b, a)
}

#[test]
fn mixing_equals_exhaustive_rational_search() {
    let mut rng = SeededRng::new(5);
    let s = spec(2, 0);
    let mut checked = 0;
    while checked < 12 {
        let n = 20 + rng.below(60);
        let groups: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < 0.5)).collect();
        let flip = [0.1 + 0.3 * rng.uniform(), 0.1 + 0.3 * rng.uniform()];
        let preds: Vec<u8> = labels
            .iter()
            .zip(&groups)
            .map(|(&y, &g)| if rng.uniform() < flip[g] { 1 - y } else { y })
            .collect();
        let Ok(policy) = fit_mixing(&labels, &preds, &groups, &s) else { continue };
        let (b, a) = exhaustive_two_group(&labels, &preds, &groups);
        let g = policy.group("c1").unwrap();
        assert_eq!((g.p0, g.p1), (f64::from(b) / 100.0, f64::from(a) / 100.0));
        checked += 1;
    }
}
