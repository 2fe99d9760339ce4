//! Diagonal Mahalanobis metric for clustering (MMC).
//!
//! Minimizes `sum_S |x_i - x_j|_A^2 - log(sum_D |x_i - x_j|_A)` over
//! `A = diag(a)`, `a >= 0`, with a projected, damped Newton method. The
//! objective is convex in `a` (the log of a sum of concave square roots) and
//! the Newton iteration is invariant to per-coordinate rescaling, so feature
//! units do not matter.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use super::PairSets;
use crate::error::{Error, Result};
use crate::metric::MetricMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmcConfig {
    /// Stop when the loss changes by less than `tol * max(1, |loss|)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MmcConfig {
    fn default() -> Self {
        MmcConfig {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

/// Result of an MMC run with its loss trace.
#[derive(Debug, Clone)]
pub struct MmcFit {
    pub metric: MetricMatrix,
    /// Loss at the initial point followed by the loss after every accepted step.
    pub losses: Vec<f64>,
    pub newton_steps: usize,
    pub gradient_steps: usize,
}

struct Problem {
    dim: usize,
    /// Sum over S of squared coordinate differences.
    same: DVector<f64>,
    /// Squared coordinate differences of every D pair.
    diff: Vec<DVector<f64>>,
}

impl Problem {
    fn new(p: &PairSets) -> Self {
        let feats = p.features();
        let dim = feats[0].dim();
        let sq = |i: usize, j: usize| -> DVector<f64> {
            (feats[i].coords() - feats[j].coords()).map(|v| v * v)
        };
        let mut same = DVector::zeros(dim);
        for &(i, j) in p.same() {
            same += sq(i, j);
        }
        let diff = p.diff().iter().map(|&(i, j)| sq(i, j)).collect();
        Problem { dim, same, diff }
    }

    fn spread(&self, a: &DVector<f64>) -> f64 {
        self.diff.iter().map(|q| q.dot(a).max(0.0).sqrt()).sum()
    }

    fn loss(&self, a: &DVector<f64>) -> f64 {
        let t = self.spread(a);
        if t <= 0.0 {
            return f64::INFINITY;
        }
        self.same.dot(a) - t.ln()
    }

    /// Gradient and Hessian at `a`. D pairs at distance zero are skipped (subgradient 0).
    fn derivatives(&self, a: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut t = 0.0;
        let mut u = DVector::zeros(self.dim);
        let mut curv = DMatrix::zeros(self.dim, self.dim);
        for q in &self.diff {
            let d = q.dot(a).max(0.0).sqrt();
            if d <= 0.0 {
                continue;
            }
            t += d;
            u.axpy(0.5 / d, q, 1.0);
            curv.ger(0.25 / (d * d * d), q, q, 1.0);
        }
        let grad = &self.same - &u / t;
        let hess = (&u * u.transpose()) / (t * t) + curv / t;
        (grad, hess)
    }
}

/// Loss of the diagonal MMC objective at `diag(a)`.
pub fn mmc_loss(p: &PairSets, a: &[f64]) -> f64 {
    Problem::new(p).loss(&DVector::from_column_slice(a))
}

/// Learns a diagonal metric; see [`mmc_learn_diagonal_traced`].
pub fn mmc_learn_diagonal(p: &PairSets, tol: f64, max_iters: usize) -> Result<MetricMatrix> {
    Ok(mmc_learn_diagonal_traced(p, &MmcConfig { tol, max_iters })?.metric)
}

/// Solves `H_ff x = -g_f` on the Jacobi-scaled system; `None` if not positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, free: &[usize]) -> Option<DVector<f64>> {
    let k = free.len();
    let mut hs = DMatrix::zeros(k, k);
    let mut gs = DVector::zeros(k);
    let scale: Vec<f64> = free.iter().map(|&i| h[(i, i)]).collect();
    if scale.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
        return None;
    }
    let scale: Vec<f64> = scale.iter().map(|s| 1.0 / s.sqrt()).collect();
    for (r, &i) in free.iter().enumerate() {
        gs[r] = g[i] * scale[r];
        for (c, &j) in free.iter().enumerate() {
            hs[(r, c)] = h[(i, j)] * scale[r] * scale[c];
        }
    }
    let chol = hs.cholesky()?;
    let step = chol.solve(&(-gs));
    let mut out = DVector::zeros(g.len());
    for (r, &i) in free.iter().enumerate() {
        out[i] = step[r] * scale[r];
    }
    Some(out)
}

/// Projected damped Newton with Armijo backtracking. Falls back to a
/// diagonally scaled gradient step when the free Hessian block is not
/// positive definite.
pub fn mmc_learn_diagonal_traced(p: &PairSets, cfg: &MmcConfig) -> Result<MmcFit> {
    if p.same().is_empty() {
        return Err(Error::Training("MMC needs at least one same-cluster pair".into()));
    }
    if p.diff().is_empty() {
        return Err(Error::Training("MMC needs at least one different-cluster pair".into()));
    }
    let prob = Problem::new(p);
    let dim = prob.dim;

    // Scale-covariant start: a_k = 1 / mean squared difference along k.
    let pairs = (p.same().len() + p.diff().len()) as f64;
    let mut total = prob.same.clone();
    for q in &prob.diff {
        total += q;
    }
    let mut a = total.map(|v| if v > 0.0 { pairs / v } else { 0.0 });
    let mut loss = prob.loss(&a);
    if !loss.is_finite() {
        return Err(Error::Training(
            "all different-cluster pairs coincide; log term is undefined".into(),
        ));
    }

    let mut losses = vec![loss];
    let mut newton_steps = 0;
    let mut gradient_steps = 0;
    for _ in 0..cfg.max_iters {
        let (g, h) = prob.derivatives(&a);
        let free: Vec<usize> = (0..dim).filter(|&k| a[k] > 0.0 || g[k] < 0.0).collect();
        if free.is_empty() {
            break;
        }
        let (dir, is_newton) = match newton_direction(&h, &g, &free) {
            Some(d) => (d, true),
            None => {
                let mut d = DVector::zeros(dim);
                for &k in &free {
                    d[k] = if h[(k, k)] > 0.0 {
                        -g[k] / h[(k, k)]
                    } else if g[k] > 0.0 {
                        -a[k]
                    } else {
                        a[k].max(1.0)
                    };
                }
                (d, false)
            }
        };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = (&a + &dir * t).map(|v| v.max(0.0));
            let cand_loss = prob.loss(&cand);
            let decrease = g.dot(&(&cand - &a));
            if cand_loss.is_finite() && cand_loss <= loss + 1e-4 * decrease.min(0.0) {
                accepted = Some((cand, cand_loss));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            break;
        };
        if is_newton {
            newton_steps += 1;
        } else {
            gradient_steps += 1;
        }
        let change = (loss - next_loss).abs();
        a = next;
        loss = next_loss;
        losses.push(loss);
        if change <= cfg.tol * loss.abs().max(1.0) {
            break;
        }
    }

    let metric = MetricMatrix::diagonal(a.as_slice())?;
    Ok(MmcFit {
        metric,
        losses,
        newton_steps,
        gradient_steps,
    })
}
