//! Multipath component distance and the Mahalanobis metric family that contains it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{FeatureVector, Mpc, Scheme};
use crate::psd;

/// Relative symmetry tolerance for metric matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance on negative eigenvalues / quadratic forms.
pub const PSD_TOL: f64 = 1e-9;

/// Delay weighting (`zeta`) and delay scaling (`gamma`, 1/s) of the MCD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdParams {
    pub zeta: f64,
    pub gamma: f64,
}

impl McdParams {
    pub fn new(zeta: f64, gamma: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::param(format!("zeta must be positive, got {zeta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("gamma must be positive, got {gamma}")));
        }
        Ok(McdParams { zeta, gamma })
    }

    /// Parameters with a combined factor `xi` (gamma = 1).
    pub fn from_xi(xi: f64) -> Result<Self> {
        McdParams::new(xi, 1.0)
    }

    /// `gamma = tau_std / max_delta_tau^2` computed from the delays of one snapshot.
    pub fn from_delays(zeta: f64, delays: &[f64]) -> Result<Self> {
        McdParams::new(zeta, default_gamma(delays)?)
    }

    pub fn xi(&self) -> f64 {
        self.zeta * self.gamma
    }
}

/// Delay scaling factor `tau_std / (max tau_i - tau_j)^2` over a set of delays.
pub fn default_gamma(delays: &[f64]) -> Result<f64> {
    if delays.len() < 2 {
        return Err(Error::Insufficient(
            "need at least two delays to derive gamma".into(),
        ));
    }
    let n = delays.len() as f64;
    let mean = delays.iter().sum::<f64>() / n;
    let var = delays.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let (lo, hi) = delays
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let span = hi - lo;
    if span <= 0.0 {
        return Err(Error::Insufficient("all delays are identical".into()));
    }
    Ok(var.sqrt() / (span * span))
}

fn unit_direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

fn half_chord(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    0.5 * d.sqrt()
}

/// Classical multipath component distance between two MPCs.
pub fn mcd(a: &Mpc, b: &Mpc, params: &McdParams, with_aod: bool) -> f64 {
    let d_tau = params.xi() * (a.tau - b.tau).abs();
    let d_rx = half_chord(unit_direction(a.zaoa, a.aaoa), unit_direction(b.zaoa, b.aaoa));
    let d_tx = if with_aod {
        half_chord(unit_direction(a.zaod, a.aaod), unit_direction(b.zaod, b.aaod))
    } else {
        0.0
    };
    (d_tau * d_tau + d_tx * d_tx + d_rx * d_rx).sqrt()
}

/// Symmetric positive-semidefinite matrix defining a Mahalanobis distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    entries: DMatrix<f64>,
}

impl MetricMatrix {
    /// Validates symmetry and positive semidefiniteness (both relative to the
    /// matrix scale) and stores the exactly symmetrized matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::param(format!(
                "metric matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("metric matrix has non-finite entries"));
        }
        let asym = psd::relative_asymmetry(&entries);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = psd::symmetrize(&entries);
        let min_eig = psd::min_relative_eigenvalue(&sym);
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(MetricMatrix { entries: sym })
    }

    /// Skips validation; callers guarantee symmetry and PSD.
    pub(crate) fn new_unchecked(entries: DMatrix<f64>) -> Self {
        MetricMatrix { entries }
    }

    pub fn identity(dim: usize) -> Self {
        MetricMatrix {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        MetricMatrix {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(v) = diag.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NotPsd(*v));
        }
        Ok(MetricMatrix {
            entries: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        })
    }

    /// Metric that only looks at the delay coordinate.
    pub fn delay_only(scheme: Scheme) -> Self {
        let mut m = DMatrix::zeros(scheme.dim(), scheme.dim());
        m[(0, 0)] = 1.0;
        MetricMatrix { entries: m }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn scheme(&self) -> Option<Scheme> {
        Scheme::from_dim(self.dim())
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.entries[(i, j)] == 0.0))
    }

    /// Squared distance `(x - y)^T A (x - y)` with floating-point leakage clamped to zero.
    pub fn squared_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        for len in [x.len(), y.len()] {
            if len != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: len,
                });
            }
        }
        let mut buf = [0.0; 8];
        let mut heap = Vec::new();
        let diff: &mut [f64] = if d <= buf.len() {
            &mut buf[..d]
        } else {
            heap.resize(d, 0.0);
            &mut heap
        };
        for ((t, a), b) in diff.iter_mut().zip(x).zip(y) {
            *t = a - b;
        }
        let mut q = 0.0;
        let mut scale = 0.0;
        for i in 0..d {
            for j in 0..d {
                let t = diff[i] * self.entries[(i, j)] * diff[j];
                q += t;
                scale += t.abs();
            }
        }
        if q < 0.0 {
            if q < -PSD_TOL * scale.max(f64::MIN_POSITIVE) && q < -PSD_TOL {
                return Err(Error::NotPsd(q));
            }
            q = 0.0;
        }
        Ok(q)
    }

    /// A factor `L` with `L^T L = A`, computed on the diagonally equilibrated
    /// matrix so that coordinates with wildly different units stay accurate.
    pub fn factor(&self) -> DMatrix<f64> {
        psd::equilibrated_factor(&self.entries)
    }
}

/// Mahalanobis distance `sqrt((x-y)^T A (x-y))`.
pub fn mahalanobis(x: &FeatureVector, y: &FeatureVector, a: &MetricMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(a.squared_distance(x.as_slice(), y.as_slice())?.sqrt())
}

/// Diagonal matrix for which the Mahalanobis distance equals the MCD with factor `xi`.
pub fn mcd_matrix(xi: f64, with_aod: bool) -> Result<MetricMatrix> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::param(format!("xi must be positive, got {xi}")));
    }
    let dim = Scheme::from_flag(with_aod).dim();
    let mut diag = vec![0.25; dim];
    diag[0] = xi * xi;
    MetricMatrix::diagonal(&diag)
}
