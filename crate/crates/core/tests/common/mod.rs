#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use mpclust::mpc::Scheme;
use mpclust::{FeatureVector, LabeledSet, Mpc};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn zenith() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(PI), 0.0..=PI]
}

pub fn azimuth() -> impl Strategy<Value = f64> {
    0.0..TAU
}

pub fn delay() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..1e-6, 0.0..1.0]
}

pub fn mpc() -> impl Strategy<Value = Mpc> {
    (delay(), 0.0..1.0, azimuth(), zenith(), azimuth(), zenith()).prop_map(
        |(tau, power, aaod, zaod, aaoa, zaoa)| Mpc {
            tau,
            power,
            aaod,
            zaod,
            aaoa,
            zaoa,
            label: None,
        },
    )
}

/// Unit direction straight from the spherical angles.
pub fn direction(azimuth: f64, zenith: f64) -> [f64; 3] {
    [
        zenith.sin() * azimuth.cos(),
        zenith.sin() * azimuth.sin(),
        zenith.cos(),
    ]
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `B^T B` for a random `d x d` matrix `B` with entries in `[-scale, scale]`.
pub fn random_psd<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-scale..=scale));
    b.transpose() * b
}

pub fn random_features<R: Rng>(rng: &mut R, n: usize, scheme: Scheme) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            let coords = (0..scheme.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            FeatureVector::from_coords(coords, scheme).unwrap()
        })
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// MCD evaluated from the angles, without going through the embedding.
pub fn mcd_oracle(a: &Mpc, b: &Mpc, xi: f64, with_aod: bool) -> f64 {
    let delay = xi * (a.tau - b.tau).abs();
    let rx = 0.5 * norm3(sub3(direction(a.aaoa, a.zaoa), direction(b.aaoa, b.zaoa)));
    let tx = if with_aod {
        0.5 * norm3(sub3(direction(a.aaod, a.zaod), direction(b.aaod, b.zaod)))
    } else {
        0.0
    };
    (delay * delay + tx * tx + rx * rx).sqrt()
}

pub fn quad(a: &DMatrix<f64>, x: &FeatureVector, y: &FeatureVector) -> f64 {
    let v = x.coords() - y.coords();
    (v.transpose() * a * &v)[(0, 0)].max(0.0).sqrt()
}

/// DBSCAN written from its definition: core points, connected components
/// of core points, borders joined to the earliest component that reaches them.
pub fn dbscan_oracle(f: &[FeatureVector], a: &DMatrix<f64>, eps: f64, min_pts: usize) -> Vec<i64> {
    let n = f.len();
    let near = |i: usize, j: usize| quad(a, &f[i], &f[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    // components numbered by their smallest core index
    let mut order: Vec<usize> = Vec::new();
    for i in (0..n).filter(|&i| core[i]) {
        let r = root(&mut parent, i);
        if !order.contains(&r) {
            order.push(r);
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                order.iter().position(|&r| r == root(&mut parent, i)).unwrap() as i64
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| order.iter().position(|&r| r == root(&mut parent, j)).unwrap() as i64)
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

pub fn sq(ls: &LabeledSet, a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let v = ls.features()[i].coords() - ls.features()[j].coords();
    (v.transpose() * a * &v)[(0, 0)]
}

/// Every impostor triplet found by a plain triple loop.
pub fn impostor_oracle(ls: &LabeledSet, targets: &[(usize, usize)], a: &DMatrix<f64>) -> BTreeSet<(usize, usize, usize)> {
    let n = ls.len();
    let labels = ls.labels();
    let mut want = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if !targets.contains(&(i, j)) {
                continue;
            }
            for l in 0..n {
                if labels[l] != labels[i] && sq(ls, a, i, l) <= sq(ls, a, i, j) + 1.0 {
                    want.insert((i, j, l));
                }
            }
        }
    }
    want
}

pub fn random_set(seed: u64, n: usize, classes: usize, scheme: Scheme) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = random_features(&mut rng, n, scheme);
    // every class gets at least two members
    let labels = (0..n).map(|i| if i < 2 * classes { i / 2 } else { rng.random_range(0..classes) }).collect();
    LabeledSet::new(features, labels).unwrap()
}

/// Points around `k` random centres in the given scheme.
pub fn blobs(seed: u64, k: usize, per: usize, spread: f64, scheme: Scheme) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = random_features(&mut rng, k, scheme);
    let mut out = Vec::new();
    for c in &centres {
        for _ in 0..per {
            let v = c.as_slice().iter().map(|x| x + rng.random_range(-spread..spread)).collect();
            out.push(FeatureVector::from_coords(v, scheme).unwrap());
        }
    }
    out
}
