use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_euclid, ClusterAssignment, Diagnostics, Frame};
use crate::error::{Error, Result};
use crate::metric::MetricMatrix;
use crate::mpc::FeatureVector;

/// Lloyd's KMeans under metric `a`, seeded k-means++ style.
pub fn kmeans(
    features: &[FeatureVector],
    k: usize,
    a: &MetricMatrix,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    let frame = Frame::transformed(features, a)?;
    lloyd(&frame, None, k, seed, max_iters)
}

/// KMeans with power-weighted centroids.
pub fn kpowermeans(
    features: &[FeatureVector],
    powers: &[f64],
    k: usize,
    a: &MetricMatrix,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    if powers.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: powers.len(),
        });
    }
    if let Some(p) = powers.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(Error::param(format!("powers must be non-negative, got {p}")));
    }
    let frame = Frame::transformed(features, a)?;
    lloyd(&frame, Some(powers), k, seed, max_iters)
}

/// Runs `run` with `restarts` seeds derived from `seed` (the first is `seed`
/// itself) and keeps the run with the lowest final objective; ties keep the
/// earliest run.
pub fn best_of_restarts<F>(seed: u64, restarts: usize, run: F) -> Result<ClusterAssignment>
where
    F: Fn(u64) -> Result<ClusterAssignment>,
{
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, ClusterAssignment)> = None;
    for r in 0..restarts.max(1) {
        let s = if r == 0 { seed } else { seeds.next_u64() };
        let a = run(s)?;
        let obj = a.diagnostics.objective.last().copied().unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, a));
        }
    }
    Ok(best.expect("at least one run").1)
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_euclid(point, cen);
        // strict: ties keep the lower index
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(frame: &Frame, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = frame.len();
    let mut centroids = vec![frame.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_euclid(frame.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = frame.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_euclid(frame.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Centroids of the current assignment. Returns the number of zero-power fallbacks.
fn update_centroids(
    frame: &Frame,
    weights: Option<&[f64]>,
    assign: &[usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) -> usize {
    let k = centroids.len();
    let dim = frame.dim;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(i);
    }
    let mut fallbacks = 0;
    for c in 0..k {
        counts[c] = members[c].len();
        if members[c].is_empty() {
            continue;
        }
        let mut sum = vec![0.0; dim];
        let mut total = 0.0;
        let max_w = weights
            .map(|w| members[c].iter().map(|&i| w[i]).fold(0.0, f64::max))
            .unwrap_or(1.0);
        let weighted = weights.is_some() && max_w > 0.0;
        if weights.is_some() && !weighted {
            fallbacks += 1;
        }
        for &i in &members[c] {
            // weights relative to the strongest member: equal powers give exactly 1
            let w = if weighted { weights.unwrap()[i] / max_w } else { 1.0 };
            total += w;
            for (s, v) in sum.iter_mut().zip(frame.row(i)) {
                *s += w * v;
            }
        }
        for (dst, s) in centroids[c].iter_mut().zip(sum) {
            *dst = s / total;
        }
    }
    fallbacks
}

fn assign_all(frame: &Frame, centroids: &[Vec<f64>], assign: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (i, a) in assign.iter_mut().enumerate() {
        let (c, d) = nearest(frame.row(i), centroids);
        *a = c;
        objective += d;
    }
    objective
}

fn sse(frame: &Frame, centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_euclid(frame.row(i), &centroids[c]))
        .sum()
}

fn reassign_empty(
    frame: &Frame,
    assign: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) -> usize {
    counts.iter_mut().for_each(|c| *c = 0);
    for &a in assign.iter() {
        counts[a] += 1;
    }
    reseed_empty(frame, assign, centroids, counts)
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn reseed_empty(
    frame: &Frame,
    assign: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) -> usize {
    let mut reseeds = 0;
    for c in 0..centroids.len() {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .map(|i| (i, sq_euclid(frame.row(i), &centroids[assign[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else { break };
        counts[assign[i]] -= 1;
        assign[i] = c;
        counts[c] = 1;
        centroids[c] = frame.row(i).to_vec();
        reseeds += 1;
    }
    reseeds
}

fn lloyd(
    frame: &Frame,
    weights: Option<&[f64]>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    let n = frame.len();
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    if k > n {
        return Err(Error::param(format!("K = {k} exceeds the number of points {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(frame, k, &mut rng);
    let mut assign = vec![0usize; n];
    let mut counts = vec![0usize; k];
    let mut diag = Diagnostics::default();
    assign_all(frame, &centroids, &mut assign);
    diag.reseeds += reassign_empty(frame, &mut assign, &mut centroids, &mut counts);

    for _ in 0..max_iters.max(1) {
        diag.iterations += 1;
        diag.zero_power_fallbacks +=
            update_centroids(frame, weights, &assign, &mut centroids, &mut counts);
        diag.objective.push(sse(frame, &centroids, &assign));
        let mut next = assign.clone();
        assign_all(frame, &centroids, &mut next);
        diag.reseeds += reassign_empty(frame, &mut next, &mut centroids, &mut counts);
        if next == assign {
            break;
        }
        assign = next;
    }
    let raw = assign.into_iter().map(|c| c as i64).collect();
    Ok(ClusterAssignment::from_raw(raw, diag))
}
