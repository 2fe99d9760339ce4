//! Metric learning from labeled MPCs.
//!
//! [`mmc`] learns a diagonal metric from same/different-cluster pairs;
//! [`lmnn`] learns a full metric from class labels with a large-margin
//! nearest-neighbour objective.

pub mod lmnn;
pub mod mmc;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMatrix;
use crate::mpc::{FeatureVector, Scheme};

pub use lmnn::{
    find_impostors, find_target_neighbors, lmnn_gradient, lmnn_learn, lmnn_learn_traced,
    lmnn_loss, lmnn_loss_triplets, LmnnConfig, LmnnFit,
};
pub use mmc::{mmc_learn_diagonal, mmc_learn_diagonal_traced, mmc_loss, MmcConfig, MmcFit};

fn check_features(features: &[FeatureVector]) -> Result<Scheme> {
    let first = features
        .first()
        .ok_or_else(|| Error::Training("no features".into()))?;
    let scheme = first.scheme();
    if let Some(f) = features.iter().find(|f| f.scheme() != scheme) {
        return Err(Error::DimensionMismatch {
            expected: scheme.dim(),
            got: f.dim(),
        });
    }
    Ok(scheme)
}

/// Weak supervision: pairs known to share a cluster (`same`) or not (`diff`).
#[derive(Debug, Clone)]
pub struct PairSets {
    features: Vec<FeatureVector>,
    same: Vec<(usize, usize)>,
    diff: Vec<(usize, usize)>,
}

impl PairSets {
    /// Pairs are normalized to `i < j`; overlapping or out-of-range pairs are rejected.
    pub fn new(
        features: Vec<FeatureVector>,
        same: Vec<(usize, usize)>,
        diff: Vec<(usize, usize)>,
    ) -> Result<Self> {
        check_features(&features)?;
        let n = features.len();
        let norm = |pairs: Vec<(usize, usize)>| -> Result<Vec<(usize, usize)>> {
            pairs
                .into_iter()
                .map(|(i, j)| {
                    if i >= n || j >= n {
                        Err(Error::Training(format!("pair ({i}, {j}) out of range for {n} features")))
                    } else if i == j {
                        Err(Error::Training(format!("degenerate pair ({i}, {i})")))
                    } else {
                        Ok((i.min(j), i.max(j)))
                    }
                })
                .collect()
        };
        let same = norm(same)?;
        let diff = norm(diff)?;
        let s: HashSet<_> = same.iter().copied().collect();
        if let Some(p) = diff.iter().find(|p| s.contains(p)) {
            return Err(Error::Training(format!("pair {p:?} is in both S and D")));
        }
        Ok(PairSets {
            features,
            same,
            diff,
        })
    }

    /// All same-label pairs into S and all different-label pairs into D.
    pub fn from_labels(features: Vec<FeatureVector>, labels: &[usize]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Training(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let n = features.len();
        let mut same = Vec::new();
        let mut diff = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if labels[i] == labels[j] {
                    same.push((i, j));
                } else {
                    diff.push((i, j));
                }
            }
        }
        PairSets::new(features, same, diff)
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn same(&self) -> &[(usize, usize)] {
        &self.same
    }

    pub fn diff(&self) -> &[(usize, usize)] {
        &self.diff
    }

    pub fn scheme(&self) -> Scheme {
        self.features[0].scheme()
    }
}

/// Fully labeled training samples.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    features: Vec<FeatureVector>,
    labels: Vec<usize>,
}

impl LabeledSet {
    /// Classes with a single member are accepted but contribute no target neighbours.
    pub fn new(features: Vec<FeatureVector>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Training(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        check_features(&features)?;
        let set = LabeledSet { features, labels };
        for (label, size) in set.class_sizes() {
            if size < 2 {
                log::warn!("class {label} has a single member and no target neighbours");
            }
        }
        Ok(set)
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn scheme(&self) -> Scheme {
        self.features[0].scheme()
    }

    pub fn class_sizes(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for &l in &self.labels {
            *out.entry(l).or_insert(0) += 1;
        }
        out
    }

    pub fn to_pair_sets(&self) -> Result<PairSets> {
        PairSets::from_labels(self.features.clone(), &self.labels)
    }
}

/// On-disk form of a learned metric: row-major entries with dimension and scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub dim: usize,
    pub scheme: Scheme,
    pub entries: Vec<f64>,
}

impl MetricFile {
    pub fn from_metric(m: &MetricMatrix) -> Result<Self> {
        let scheme = m.scheme().ok_or_else(|| {
            Error::param(format!("metric of dimension {} has no feature scheme", m.dim()))
        })?;
        let d = m.dim();
        let e = m.entries();
        let entries = (0..d).flat_map(|i| (0..d).map(move |j| e[(i, j)])).collect();
        Ok(MetricFile {
            dim: d,
            scheme,
            entries,
        })
    }

    pub fn to_metric(&self) -> Result<MetricMatrix> {
        if self.scheme.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.scheme.dim(),
                got: self.dim,
            });
        }
        if self.entries.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                got: self.entries.len(),
            });
        }
        MetricMatrix::new(nalgebra::DMatrix::from_row_slice(
            self.dim,
            self.dim,
            &self.entries,
        ))
    }
}
