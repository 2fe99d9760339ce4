use std::collections::VecDeque;

use super::{ClusterAssignment, DbscanParams, Diagnostics, NOISE};
use crate::error::{Error, Result};
use crate::metric::MetricMatrix;
use crate::mpc::FeatureVector;

fn pairwise(features: &[FeatureVector], a: &MetricMatrix) -> Result<Vec<f64>> {
    let n = features.len();
    if let Some(f) = features.iter().find(|f| f.dim() != a.dim()) {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: f.dim(),
        });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a
                .squared_distance(features[i].as_slice(), features[j].as_slice())?
                .sqrt();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(d)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn auto_eps_from(dist: &[f64], n: usize, min_pts: usize) -> f64 {
    if n < 2 {
        return f64::MIN_POSITIVE;
    }
    let kth: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).collect();
            row.sort_by(f64::total_cmp);
            row[min_pts.min(row.len()) - 1]
        })
        .collect();
    let eps = median(kth);
    if eps > 0.0 {
        eps
    } else {
        f64::MIN_POSITIVE
    }
}

/// Median over points of the distance to the `min_pts`-th nearest other point.
pub fn auto_eps(features: &[FeatureVector], a: &MetricMatrix, min_pts: usize) -> Result<f64> {
    let dist = pairwise(features, a)?;
    Ok(auto_eps_from(&dist, features.len(), min_pts.max(1)))
}

/// Classic DBSCAN with `mahalanobis <= eps` neighbourhoods (self included),
/// scanning points in input order. Noise is labeled `-1`.
pub fn dbscan(
    features: &[FeatureVector],
    a: &MetricMatrix,
    params: &DbscanParams,
) -> Result<ClusterAssignment> {
    params.validate()?;
    let n = features.len();
    let dist = pairwise(features, a)?;
    let eps = params
        .eps
        .unwrap_or_else(|| auto_eps_from(&dist, n, params.min_pts));
    let neighbours = |p: usize| -> Vec<usize> { (0..n).filter(|&q| dist[p * n + q] <= eps).collect() };

    const UNVISITED: i64 = i64::MIN;
    let mut labels = vec![UNVISITED; n];
    let mut cluster = 0i64;
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        let nb = neighbours(p);
        if nb.len() < params.min_pts {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = cluster;
        let mut queue: VecDeque<usize> = nb.into_iter().filter(|&q| q != p).collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster;
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster;
            let nq = neighbours(q);
            if nq.len() >= params.min_pts {
                queue.extend(nq);
            }
        }
        cluster += 1;
    }
    let diag = Diagnostics {
        eps: Some(eps),
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(labels, diag))
}
