//! Large-margin nearest-neighbour (LMNN) metric learning.
//!
//! The loss is `(1 - mu) * pull + mu * push` where `pull` sums squared
//! distances from every sample to its fixed target neighbours and `push`
//! sums the hinge `[1 + d(i, j) - d(i, l)]_+` over target pairs `(i, j)` and
//! differently-labeled `l`. It is minimized by projected subgradient descent
//! over PSD matrices.
//!
//! Training runs in a standardized coordinate frame (each coordinate divided
//! by its standard deviation over the training set) so that a delay measured
//! in seconds and unit direction vectors get comparable step sizes. The loss
//! is unchanged by this reparametrization: for the diagonal scaling `S`,
//! `A = S M S` and `d_A(x, y) = d_M(Sx, Sy)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::error::{Error, Result};
use crate::metric::{mcd_matrix, MetricMatrix};
use crate::psd::psd_project;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmnnConfig {
    /// Target neighbours per sample.
    pub k: usize,
    /// Weight of the push term.
    pub mu: f64,
    pub max_iters: usize,
    /// Initial step size in the standardized frame.
    pub step_size: f64,
    /// Impostor candidates are recomputed every this many iterations.
    pub impostor_refresh: usize,
    /// Stop when an accepted step changes the loss by less than this fraction.
    pub tol: f64,
    /// Starting metric; defaults to the MCD matrix with unit delay factor.
    #[serde(skip)]
    pub init: Option<MetricMatrix>,
}

impl Default for LmnnConfig {
    fn default() -> Self {
        LmnnConfig {
            k: 3,
            mu: 0.5,
            max_iters: 500,
            step_size: 1e-7,
            impostor_refresh: 10,
            tol: 1e-7,
            init: None,
        }
    }
}

impl LmnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::param(format!("mu must be in [0, 1], got {}", self.mu)));
        }
        if self.k < 1 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::param("step_size must be positive"));
        }
        if self.impostor_refresh < 1 {
            return Err(Error::param("impostor_refresh must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration record of an LMNN run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmnnStep {
    pub loss: f64,
    pub best_loss: f64,
    pub accepted: bool,
    /// Smallest eigenvalue of the current iterate (standardized frame).
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct LmnnFit {
    pub metric: MetricMatrix,
    pub targets: Vec<(usize, usize)>,
    pub init_loss: f64,
    pub best_loss: f64,
    pub trace: Vec<LmnnStep>,
}

/// Flat row-major point set.
struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn from_set(ls: &LabeledSet, scale: &[f64]) -> Self {
        let dim = ls.scheme().dim();
        let data = ls
            .features()
            .iter()
            .flat_map(|f| f.as_slice().iter().zip(scale).map(|(v, s)| v * s))
            .collect();
        Points { data, dim }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn diff(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.row(i).iter().zip(self.row(j)).map(|(a, b)| a - b))
    }

    fn sqdist(&self, m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let mut q = 0.0;
        for r in 0..self.dim {
            let dr = a[r] - b[r];
            if dr == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..self.dim {
                acc += m[(r, c)] * (a[c] - b[c]);
            }
            q += dr * acc;
        }
        q
    }

    fn all_sqdist(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.sqdist(m, i, j);
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }
}

fn unit_scale(dim: usize) -> Vec<f64> {
    vec![1.0; dim]
}

/// For every sample, the `k` nearest same-label samples under `seed_metric`
/// (ties to the lower index). `k` is clamped per class to `class size - 1`.
/// Returned as `(i, j)` meaning `j` is a target neighbour of `i`.
pub fn find_target_neighbors(
    ls: &LabeledSet,
    k: usize,
    seed_metric: &MetricMatrix,
) -> Result<Vec<(usize, usize)>> {
    let dim = ls.scheme().dim();
    if seed_metric.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: seed_metric.dim(),
        });
    }
    let labels = ls.labels();
    let feats = ls.features();
    let mut out = Vec::new();
    for i in 0..ls.len() {
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for j in 0..ls.len() {
            if j != i && labels[j] == labels[i] {
                let d = seed_metric.squared_distance(feats[i].as_slice(), feats[j].as_slice())?;
                cands.push((d, j));
            }
        }
        if cands.is_empty() {
            log::warn!("sample {i} has no same-label partner; no target neighbours");
            continue;
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(cands.into_iter().take(k).map(|(_, j)| (i, j)));
    }
    Ok(out)
}

fn impostor_triplets(
    pts: &Points,
    labels: &[usize],
    targets: &[(usize, usize)],
    dist: &[f64],
) -> Vec<(usize, usize, usize)> {
    let n = pts.len();
    let mut out = Vec::new();
    for &(i, j) in targets {
        let dij = dist[i * n + j];
        for l in 0..n {
            if labels[l] != labels[i] && dist[i * n + l] <= dij + 1.0 {
                out.push((i, j, l));
            }
        }
    }
    out
}

/// Every `(i, j, l)` with `j` a target of `i`, `l` differently labeled and
/// `|x_l - x_i|_A^2 <= |x_j - x_i|_A^2 + 1`.
pub fn find_impostors(
    ls: &LabeledSet,
    targets: &[(usize, usize)],
    a: &MetricMatrix,
) -> Result<Vec<(usize, usize, usize)>> {
    check_dim(ls, a)?;
    let pts = Points::from_set(ls, &unit_scale(a.dim()));
    let dist = pts.all_sqdist(a.entries());
    Ok(impostor_triplets(&pts, ls.labels(), targets, &dist))
}

fn check_dim(ls: &LabeledSet, a: &MetricMatrix) -> Result<()> {
    if ls.scheme().dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: ls.scheme().dim(),
            got: a.dim(),
        });
    }
    Ok(())
}

fn pull_push_all(
    pts: &Points,
    labels: &[usize],
    targets: &[(usize, usize)],
    dist: &[f64],
) -> (f64, f64) {
    let n = pts.len();
    let mut pull = 0.0;
    let mut push = 0.0;
    for &(i, j) in targets {
        let dij = dist[i * n + j];
        pull += dij;
        for l in 0..n {
            if labels[l] != labels[i] {
                push += (1.0 + dij - dist[i * n + l]).max(0.0);
            }
        }
    }
    (pull, push)
}

/// LMNN loss over all differently-labeled `l`.
pub fn lmnn_loss(
    ls: &LabeledSet,
    targets: &[(usize, usize)],
    a: &MetricMatrix,
    mu: f64,
) -> Result<f64> {
    check_dim(ls, a)?;
    let pts = Points::from_set(ls, &unit_scale(a.dim()));
    let dist = pts.all_sqdist(a.entries());
    let (pull, push) = pull_push_all(&pts, ls.labels(), targets, &dist);
    Ok((1.0 - mu) * pull + mu * push)
}

/// LMNN loss with the push sum restricted to the given triplets.
pub fn lmnn_loss_triplets(
    ls: &LabeledSet,
    targets: &[(usize, usize)],
    triplets: &[(usize, usize, usize)],
    a: &DMatrix<f64>,
    mu: f64,
) -> f64 {
    let pts = Points::from_set(ls, &unit_scale(a.nrows()));
    let pull: f64 = targets.iter().map(|&(i, j)| pts.sqdist(a, i, j)).sum();
    let push: f64 = triplets
        .iter()
        .map(|&(i, j, l)| (1.0 + pts.sqdist(a, i, j) - pts.sqdist(a, i, l)).max(0.0))
        .sum();
    (1.0 - mu) * pull + mu * push
}

fn gradient_in(
    pts: &Points,
    targets: &[(usize, usize)],
    triplets: &[(usize, usize, usize)],
    m: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let d = pts.dim;
    let mut g = DMatrix::zeros(d, d);
    for &(i, j) in targets {
        let v = pts.diff(i, j);
        g.ger(1.0 - mu, &v, &v, 1.0);
    }
    if mu > 0.0 {
        for &(i, j, l) in triplets {
            if 1.0 + pts.sqdist(m, i, j) - pts.sqdist(m, i, l) > 0.0 {
                let vj = pts.diff(i, j);
                let vl = pts.diff(i, l);
                g.ger(mu, &vj, &vj, 1.0);
                g.ger(-mu, &vl, &vl, 1.0);
            }
        }
    }
    g
}

/// (Sub)gradient of [`lmnn_loss_triplets`] with respect to `A`: pull outer
/// products weighted `1 - mu`, and `+mu`/`-mu` outer products over triplets
/// whose hinge is active.
pub fn lmnn_gradient(
    ls: &LabeledSet,
    targets: &[(usize, usize)],
    triplets: &[(usize, usize, usize)],
    a: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let pts = Points::from_set(ls, &unit_scale(a.nrows()));
    gradient_in(&pts, targets, triplets, a, mu)
}

/// Learns a full metric; see [`lmnn_learn_traced`].
pub fn lmnn_learn(ls: &LabeledSet, cfg: &LmnnConfig) -> Result<MetricMatrix> {
    Ok(lmnn_learn_traced(ls, cfg)?.metric)
}

fn standardizing_scale(ls: &LabeledSet) -> Vec<f64> {
    let d = ls.scheme().dim();
    let n = ls.len() as f64;
    (0..d)
        .map(|k| {
            let mean = ls.features().iter().map(|f| f.as_slice()[k]).sum::<f64>() / n;
            let var = ls
                .features()
                .iter()
                .map(|f| (f.as_slice()[k] - mean).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Projected subgradient descent on the LMNN loss.
///
/// Target neighbours are fixed from the initial metric. After every step the
/// iterate is projected onto the PSD cone; the step size grows by 1% after an
/// accepted step and halves (with rollback) after a rejected one. The
/// best-loss iterate is returned.
pub fn lmnn_learn_traced(ls: &LabeledSet, cfg: &LmnnConfig) -> Result<LmnnFit> {
    cfg.validate()?;
    let scheme = ls.scheme();
    let init = match &cfg.init {
        Some(m) => m.clone(),
        None => mcd_matrix(1.0, scheme.with_aod())?,
    };
    check_dim(ls, &init)?;
    let targets = find_target_neighbors(ls, cfg.k, &init)?;
    if targets.is_empty() {
        return Err(Error::Training(
            "no target neighbour pairs: every class has a single member".into(),
        ));
    }

    let scale = standardizing_scale(ls);
    let pts = Points::from_set(ls, &scale);
    let labels = ls.labels();
    let d = scheme.dim();
    let mut m = init.entries().clone();
    for r in 0..d {
        for c in 0..d {
            m[(r, c)] /= scale[r] * scale[c];
        }
    }

    let eval = |m: &DMatrix<f64>| -> (f64, Vec<f64>) {
        let dist = pts.all_sqdist(m);
        let (pull, push) = pull_push_all(&pts, labels, &targets, &dist);
        ((1.0 - cfg.mu) * pull + cfg.mu * push, dist)
    };

    let (mut loss, dist) = eval(&m);
    let init_loss = loss;
    let mut candidates = impostor_triplets(&pts, labels, &targets, &dist);
    let mut best = (m.clone(), loss);
    let mut step = cfg.step_size;
    let mut trace = Vec::new();

    for iter in 1..=cfg.max_iters {
        if loss <= 0.0 {
            break;
        }
        if iter % cfg.impostor_refresh == 0 {
            let dist = pts.all_sqdist(&m);
            candidates = impostor_triplets(&pts, labels, &targets, &dist);
        }
        let g = gradient_in(&pts, &targets, &candidates, &m, cfg.mu);
        let gnorm = g.norm();
        if gnorm == 0.0 {
            break;
        }
        let next = psd_project(&(&m - &g * step)).into_inner();
        let (next_loss, _) = eval(&next);
        let accepted = next_loss <= loss;
        if accepted {
            let rel = (loss - next_loss) / loss.abs().max(f64::MIN_POSITIVE);
            m = next;
            loss = next_loss;
            step *= 1.01;
            if loss < best.1 {
                best = (m.clone(), loss);
            }
            trace.push(LmnnStep {
                loss,
                best_loss: best.1,
                accepted,
                min_eigenvalue: min_eigenvalue(&m),
            });
            if rel < cfg.tol {
                break;
            }
        } else {
            step *= 0.5;
            trace.push(LmnnStep {
                loss: next_loss,
                best_loss: best.1,
                accepted,
                min_eigenvalue: min_eigenvalue(&m),
            });
            // the step no longer moves the iterate
            if step * gnorm <= 1e-15 * m.norm().max(1e-300) {
                break;
            }
        }
    }

    let mut a = best.0;
    for r in 0..d {
        for c in 0..d {
            a[(r, c)] *= scale[r] * scale[c];
        }
    }
    let metric = MetricMatrix::new(crate::psd::symmetrize(&a))?;
    Ok(LmnnFit {
        metric,
        targets,
        init_loss,
        best_loss: best.1,
        trace,
    })
}
