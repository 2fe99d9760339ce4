//! External clustering validation with the F measure.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

/// A predicted cluster; every noise point forms its own singleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedCluster {
    Cluster(usize),
    /// Noise singleton, identified by the point index.
    Noise(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FReport {
    pub overall_f: f64,
    /// Best `F(L_i, C_j)` of every ground-truth class.
    pub per_class_f: BTreeMap<usize, f64>,
    /// The predicted cluster achieving it.
    pub matched_pred: BTreeMap<usize, PredictedCluster>,
}

/// F measure of a predicted partition against ground truth.
///
/// With `n_ij = |L_i ∩ C_j|`, precision `n_ij / |C_j|` and recall
/// `n_ij / |L_i|`, the harmonic mean is `2 n_ij / (|L_i| + |C_j|)`. The
/// overall score weights every class by its share of all MPCs.
pub fn f_measure(truth: &[usize], pred: &ClusterAssignment) -> Result<FReport> {
    if truth.len() != pred.assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.assignment.len(),
        });
    }
    let total = truth.len();
    if total == 0 {
        return Err(Error::Insufficient("no MPCs to score".into()));
    }
    let ids: Vec<PredictedCluster> = pred
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c < 0 {
                PredictedCluster::Noise(i)
            } else {
                PredictedCluster::Cluster(c as usize)
            }
        })
        .collect();

    let mut class_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pred_size: HashMap<PredictedCluster, usize> = HashMap::new();
    let mut joint: BTreeMap<(usize, PredictedCluster), usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(&ids) {
        *class_size.entry(t).or_insert(0) += 1;
        *pred_size.entry(p).or_insert(0) += 1;
        *joint.entry((t, p)).or_insert(0) += 1;
    }

    let mut per_class_f = BTreeMap::new();
    let mut matched_pred = BTreeMap::new();
    for (&(t, p), &n) in &joint {
        let f = 2.0 * n as f64 / (class_size[&t] + pred_size[&p]) as f64;
        let best = per_class_f.entry(t).or_insert(f64::NEG_INFINITY);
        if f > *best {
            *best = f;
            matched_pred.insert(t, p);
        }
    }
    // one division at the end keeps a perfect partition at exactly 1
    let weighted: f64 = class_size
        .iter()
        .map(|(t, &size)| size as f64 * per_class_f[t])
        .sum();
    let overall_f = (weighted / total as f64).clamp(0.0, 1.0);
    Ok(FReport {
        overall_f,
        per_class_f,
        matched_pred,
    })
}

/// Mean, sample standard deviation and count of overall F scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

pub fn aggregate(reports: &[FReport]) -> Result<Summary> {
    let values: Vec<f64> = reports.iter().map(|r| r.overall_f).collect();
    summarize(&values)
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Insufficient("nothing to aggregate".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary { mean, sd, count: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Diagnostics;

    fn pred(v: &[i64]) -> ClusterAssignment {
        ClusterAssignment::from_raw(v.to_vec(), Diagnostics::default())
    }

    #[test]
    fn identical_partition_scores_one() {
        let r = f_measure(&[0, 0, 1, 1, 2], &pred(&[0, 0, 1, 1, 2])).unwrap();
        assert_eq!(r.overall_f, 1.0);
    }

    #[test]
    fn swapped_labels_score_one() {
        let r = f_measure(&[0, 0, 1, 1], &pred(&[1, 1, 0, 0])).unwrap();
        assert_eq!(r.overall_f, 1.0);
    }

    #[test]
    fn everything_in_one_cluster() {
        let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let r = f_measure(&truth, &pred(&[0; 10])).unwrap();
        assert!((r.per_class_f[&0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class_f[&1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.overall_f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn noise_points_are_singletons() {
        let r = f_measure(&[0, 0, 0], &pred(&[-1, -1, -1])).unwrap();
        assert_eq!(r.per_class_f[&0], 2.0 / 4.0);
        assert_eq!(r.matched_pred[&0], PredictedCluster::Noise(0));
    }

    #[test]
    fn length_mismatch() {
        assert!(f_measure(&[0, 0], &pred(&[0])).is_err());
    }

    #[test]
    fn aggregate_basics() {
        let mk = |f| FReport {
            overall_f: f,
            per_class_f: BTreeMap::new(),
            matched_pred: BTreeMap::new(),
        };
        let s = aggregate(&[mk(0.7)]).unwrap();
        assert_eq!((s.mean, s.sd, s.count), (0.7, 0.0, 1));
        let s = aggregate(&[mk(0.0), mk(1.0)]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.sd - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }
}
