//! Support-recovery and estimation-error metrics along a path.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// Which matrix a support is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Target {
    /// Slopes of `B` (intercept row excluded).
    B,
    /// Strict upper triangle of `Theta`.
    Theta,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::B => "B",
            Target::Theta => "Theta",
        }
    }

    /// Entries whose support is compared.
    pub fn entries(self, m: &Array2<f64>) -> Vec<f64> {
        match self {
            Target::B => m.rows().into_iter().skip(1).flatten().copied().collect(),
            Target::Theta => {
                let p = m.nrows();
                let mut out = Vec::with_capacity(p * (p - 1) / 2);
                for h in 0..p {
                    for k in (h + 1)..p {
                        out.push(m[[h, k]]);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub target: Target,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub auc: f64,
    pub mse_path: Vec<f64>,
    pub min_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

pub fn confusion(estimate: &[f64], truth: &[f64]) -> Confusion {
    let mut c = Confusion {
        true_positive: 0,
        false_positive: 0,
        false_negative: 0,
    };
    for (e, t) in estimate.iter().zip(truth) {
        match (*e != 0.0, *t != 0.0) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (false, false) => {}
        }
    }
    c
}

/// Precision (1 for an empty estimated support) and recall (1 when the true
/// support is empty).
pub fn precision_recall(estimate: &[f64], truth: &[f64]) -> (f64, f64) {
    let c = confusion(estimate, truth);
    let selected = c.true_positive + c.false_positive;
    let relevant = c.true_positive + c.false_negative;
    let precision = if selected == 0 {
        1.0
    } else {
        c.true_positive as f64 / selected as f64
    };
    let recall = if relevant == 0 {
        1.0
    } else {
        c.true_positive as f64 / relevant as f64
    };
    (precision, recall)
}

/// Area under the precision-recall curve.
///
/// Points are sorted by recall with duplicates collapsed to their best
/// precision; the curve is extended flat to recall 0 and linearly to
/// `(1, prevalence)`, the precision of selecting every candidate.
pub fn pr_auc(points: &[(f64, f64)], prevalence: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(p, r)| (r, p)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|later, first| later.0 == first.0);
    if pts.is_empty() {
        return 0.0;
    }
    if pts[0].0 > 0.0 {
        pts.insert(0, (0.0, pts[0].1));
    }
    if pts[pts.len() - 1].0 < 1.0 {
        pts.push((1.0, prevalence));
    }
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

/// Squared Frobenius norm of the difference.
pub fn squared_error(estimate: &Array2<f64>, truth: &Array2<f64>) -> f64 {
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

pub fn pr_metrics(path: &[Array2<f64>], truth: &Array2<f64>, target: Target) -> Result<MetricsReport> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let t = target.entries(truth);
    let prevalence = if t.is_empty() {
        0.0
    } else {
        t.iter().filter(|v| **v != 0.0).count() as f64 / t.len() as f64
    };
    let mut precision = Vec::with_capacity(path.len());
    let mut recall = Vec::with_capacity(path.len());
    let mut mse_path = Vec::with_capacity(path.len());
    for est in path {
        if est.dim() != truth.dim() {
            return Err(Error::DimensionMismatch("estimate and truth differ in shape".into()));
        }
        let (p, r) = precision_recall(&target.entries(est), &t);
        precision.push(p);
        recall.push(r);
        mse_path.push(squared_error(est, truth));
    }
    let pts: Vec<(f64, f64)> = precision.iter().copied().zip(recall.iter().copied()).collect();
    let auc = pr_auc(&pts, prevalence);
    let min_mse = mse_path.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MetricsReport {
        target,
        precision,
        recall,
        auc,
        mse_path,
        min_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_empty_support() {
        let truth = array![[1.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let r = pr_metrics(&[truth.clone()], &truth, Target::Theta).unwrap();
        assert_eq!((r.precision[0], r.recall[0]), (1.0, 1.0));
        assert_eq!(r.min_mse, 0.0);
        assert_eq!(r.auc, 1.0);
        let empty = Array2::<f64>::eye(3);
        let r = pr_metrics(&[empty], &truth, Target::Theta).unwrap();
        assert_eq!((r.precision[0], r.recall[0]), (1.0, 0.0));
    }

    #[test]
    fn auc_of_a_known_curve() {
        // (precision, recall) points; prevalence 0.2
        let auc = pr_auc(&[(1.0, 0.5), (0.5, 1.0), (0.8, 0.5)], 0.2);
        // (0,1) -> (0.5,1) -> (1,0.5)
        assert!((auc - (0.5 + 0.5 * 0.75)).abs() < 1e-15);
        let auc = pr_auc(&[(1.0, 0.0)], 0.25);
        assert!((auc - 0.625).abs() < 1e-15);
    }

    #[test]
    fn b_target_skips_intercepts() {
        let truth = array![[5.0, 5.0], [0.5, 0.0], [0.0, 0.4]];
        let est = array![[0.0, 0.0], [0.1, 0.2], [0.0, 0.0]];
        let (p, r) = precision_recall(&Target::B.entries(&est), &Target::B.entries(&truth));
        assert_eq!((p, r), (0.5, 0.5));
    }

    proptest! {
        #[test]
        fn matches_brute_force_counts(
            est in prop::collection::vec(prop::bool::ANY, 1..60),
            seed in prop::collection::vec(prop::bool::ANY, 60),
        ) {
            let truth: Vec<f64> = seed[..est.len()].iter().map(|&b| if b { 0.5 } else { 0.0 }).collect();
            let e: Vec<f64> = est.iter().map(|&b| if b { -0.1 } else { 0.0 }).collect();
            let mut tp = 0; let mut fp = 0; let mut fneg = 0;
            for i in 0..e.len() {
                if e[i] != 0.0 && truth[i] != 0.0 { tp += 1; }
                if e[i] != 0.0 && truth[i] == 0.0 { fp += 1; }
                if e[i] == 0.0 && truth[i] != 0.0 { fneg += 1; }
            }
            let (p, r) = precision_recall(&e, &truth);
            let ep = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            let er = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
            prop_assert_eq!(p, ep);
            prop_assert_eq!(r, er);
            let auc = pr_auc(&[(p, r)], 0.3);
            prop_assert!((0.0..=1.0).contains(&auc));
        }
    }
}
