//! Positive-semidefinite linear algebra: projection, square root and factors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::metric::{MetricMatrix, SYMMETRY_TOL};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `|m_ij - m_ji|` relative to the largest entry magnitude (or 1).
pub(crate) fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Positive diagonal scaling `d` with `diag(d)^-1 M diag(d)^-1` having unit
/// diagonal wherever `M` has a positive one.
fn equilibration(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows(),
        (0..m.nrows()).map(|i| {
            let v = m[(i, i)];
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        }),
    )
}

fn scale_both(m: &DMatrix<f64>, inv: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] *= inv[i] * inv[j];
        }
    }
    out
}

/// Smallest eigenvalue of the equilibrated matrix relative to its largest
/// magnitude eigenvalue (or 1). PSD-ness is invariant under the scaling.
pub(crate) fn min_relative_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if (0..m.nrows()).any(|i| m[(i, i)] < 0.0) {
        let worst = (0..m.nrows()).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
        return worst / m.amax().max(1.0);
    }
    let d = equilibration(m);
    let inv = d.map(|v| 1.0 / v);
    let b = scale_both(m, &inv);
    let eig = SymmetricEigen::new(b);
    let max = eig.eigenvalues.amax().max(1.0);
    eig.eigenvalues.min() / max
}

/// `L` with `L^T L = M` for a PSD `M`; negative eigenvalues are clamped.
pub(crate) fn equilibrated_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = equilibration(m);
    let inv = d.map(|v| 1.0 / v);
    let b = scale_both(m, &inv);
    let eig = SymmetricEigen::new(b);
    let n = m.nrows();
    // L = Lambda^1/2 V^T D
    let mut l = eig.eigenvectors.transpose();
    for i in 0..n {
        let s = eig.eigenvalues[i].max(0.0).sqrt();
        for j in 0..n {
            l[(i, j)] *= s * d[j];
        }
    }
    l
}

fn reconstruct(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let mapped = eig.eigenvalues.map(f);
    let mut scaled = v.clone();
    for (j, s) in mapped.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    symmetrize(&(scaled * v.transpose()))
}

/// Symmetric PSD square root of a metric matrix.
///
/// Negative eigenvalues (numerical leakage) are clamped to zero. The returned
/// map satisfies `|S x - S y| = mahalanobis(x, y, A)`.
pub fn sqrt_transform(a: &MetricMatrix) -> Result<DMatrix<f64>> {
    sqrt_symmetric(a.entries())
}

/// Square root of an arbitrary symmetric matrix (within tolerance).
pub fn sqrt_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::param("matrix must be square"));
    }
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    if is_diagonal(m) {
        return Ok(DMatrix::from_diagonal(&m.diagonal().map(|v| v.max(0.0).sqrt())));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    Ok(reconstruct(&eig, |l| l.max(0.0).sqrt()))
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Frobenius-nearest PSD matrix: symmetrize, clamp negative eigenvalues, rebuild.
pub fn psd_project(m: &DMatrix<f64>) -> MetricMatrix {
    let sym = symmetrize(m);
    if is_diagonal(&sym) {
        return MetricMatrix::new_unchecked(DMatrix::from_diagonal(&sym.diagonal().map(|v| v.max(0.0))));
    }
    let eig = SymmetricEigen::new(sym);
    MetricMatrix::new_unchecked(reconstruct(&eig, |l| l.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_root_is_identity() {
        let s = sqrt_transform(&MetricMatrix::identity(7)).unwrap();
        assert_eq!(s, DMatrix::identity(7, 7));
    }

    #[test]
    fn diagonal_root() {
        let a = MetricMatrix::diagonal(&[4.0, 1.0, 1.0, 1.0]).unwrap();
        let s = sqrt_transform(&a).unwrap();
        assert_eq!(s, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0])));
    }

    #[test]
    fn projection_clamps() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let p = psd_project(&m);
        assert_eq!(p.entries(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_fixes_psd_input() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -0.3, 0.7, 1.1, 0.2, 0.0, 2.0]);
        let a = b.transpose() * &b;
        let p = psd_project(&a);
        assert!((p.entries() - &a).amax() < 1e-10);
    }

    #[test]
    fn non_symmetric_root_is_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(matches!(sqrt_symmetric(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn factor_survives_mixed_units() {
        // delay entry ~ 1/s^2 next to O(1) angle entries
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[4e18, 1e8, -2e8, 1e8, 0.3, 0.05, -2e8, 0.05, 0.2],
        );
        let m = MetricMatrix::new(a.clone()).unwrap();
        let l = m.factor();
        let back = l.transpose() * &l;
        for i in 0..3 {
            for j in 0..3 {
                let rel = (back[(i, j)] - a[(i, j)]).abs() / (a[(i, i)] * a[(j, j)]).sqrt();
                assert!(rel < 1e-12, "({i},{j}) rel err {rel}");
            }
        }
    }
}
