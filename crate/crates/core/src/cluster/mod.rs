//! KMeans, KPowerMeans and DBSCAN under an arbitrary learned metric.
//!
//! Partitioning algorithms run on features mapped through a factor `L` with
//! `L^T L = A`, where plain Euclidean geometry reproduces the learned
//! Mahalanobis distance.

mod dbscan;
mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMatrix;
use crate::mpc::FeatureVector;

pub use dbscan::{auto_eps, dbscan};
pub use kmeans::{best_of_restarts, kmeans, kpowermeans};

/// Label used for DBSCAN noise.
pub const NOISE: i64 = -1;

/// Counters reported by the clustering algorithms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Within-cluster sum of squared learned distances after every assignment step.
    pub objective: Vec<f64>,
    /// Centroid updates that fell back to an unweighted mean because every
    /// member of the cluster had zero power.
    pub zero_power_fallbacks: usize,
    /// Empty clusters that were reseeded.
    pub reseeds: usize,
    /// Neighbourhood radius used by DBSCAN.
    pub eps: Option<f64>,
}

/// Cluster id per MPC (`-1` for DBSCAN noise) and the number of clusters found.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignment: Vec<i64>,
    pub n_found: usize,
    pub diagnostics: Diagnostics,
}

impl ClusterAssignment {
    /// Relabels non-noise ids contiguously in order of first appearance.
    pub fn from_raw(raw: Vec<i64>, diagnostics: Diagnostics) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = raw
            .into_iter()
            .map(|c| {
                if c < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(c).or_insert(next)
                }
            })
            .collect();
        ClusterAssignment {
            assignment,
            n_found: map.len(),
            diagnostics,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|&&c| c < 0).count()
    }
}

/// DBSCAN parameters; `eps = None` picks the radius per snapshot (see [`auto_eps`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    pub eps: Option<f64>,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: None,
            min_pts: 5,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::param(format!("eps must be positive, got {eps}")));
            }
        }
        if self.min_pts < 1 {
            return Err(Error::param("min_pts must be at least 1"));
        }
        Ok(())
    }
}

/// Row-major points in the transformed (Euclidean) frame.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub data: Vec<f64>,
    pub dim: usize,
}

impl Frame {
    pub fn transformed(features: &[FeatureVector], a: &MetricMatrix) -> Result<Self> {
        let dim = a.dim();
        if let Some(f) = features.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        let l = a.factor();
        let mut data = Vec::with_capacity(features.len() * dim);
        for f in features {
            let y = &l * f.coords();
            data.extend(y.iter());
        }
        Ok(Frame { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub(crate) fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
