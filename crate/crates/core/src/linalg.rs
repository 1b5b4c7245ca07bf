//! Small dense Hermitian spectral routines on top of `faer`.
//!
//! Singular values come from a direct SVD so that tiny values are resolved
//! to about `1e-16 · σ_max`; the Gram-matrix route only reaches
//! `1e-8 · σ_max` there. Subspace projections in [`crate::ht`] still use the
//! cheaper Gram eigendecomposition.

use faer::Side;

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, C64};

fn check_finite(m: &CMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Numeric("matrix has non-finite entries".into()));
            }
        }
    }
    Ok(())
}

/// Row-major construction.
pub fn from_rows(rows: usize, cols: usize, entries: &[C64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols, "entry count does not match shape");
    CMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j])
}

/// `a ⊗ b`, with the row index of `a` slowest.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = (b.nrows(), b.ncols());
    CMatrix::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn scale(m: &CMatrix, factor: C64) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * factor)
}

/// Largest entrywise `|a − b|`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
/// Column `k` of the returned matrix is the eigenvector of value `k`. Ties
/// keep the solver's column order.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if m.nrows() != m.ncols() {
        return Err(Error::contract("eigh needs a square matrix"));
    }
    check_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let raw: Vec<f64> = (0..n).map(|k| eig.S()[k].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let u = eig.U();
    let vectors = CMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((order.iter().map(|&k| raw[k]).collect(), vectors))
}

/// `M M†`.
pub fn gram_rows(m: &CMatrix) -> CMatrix {
    m * m.adjoint()
}

/// `M† M`.
pub fn gram_cols(m: &CMatrix) -> CMatrix {
    m.adjoint() * m
}

/// Full singular spectrum, descending, of length `min(rows, cols)`.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut values = m
        .singular_values()
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// `exp(-i · coefficient · M)` for Hermitian `M`.
pub fn expm_hermitian(m: &CMatrix, coefficient: f64) -> Result<CMatrix> {
    if coefficient == 0.0 {
        check_finite(m)?;
        return Ok(CMatrix::identity(m.nrows(), m.ncols()));
    }
    let (values, vectors) = eigh(m)?;
    let scaled = CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        vectors[(i, j)] * C64::from_polar(1.0, -coefficient * values[j])
    });
    Ok(&scaled * vectors.adjoint())
}

/// Largest `|U†U − I|` entry.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs_diff(&(u.adjoint() * u), &CMatrix::identity(n, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn singular_value_examples() {
        assert_eq!(singular_values(&CMatrix::identity(2, 2)).unwrap(), vec![1.0, 1.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sv = singular_values(&scale(&CMatrix::identity(2, 2), c(s))).unwrap();
        for v in sv {
            assert_abs_diff_eq!(v, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-8);
        }
        assert_eq!(singular_values(&CMatrix::zeros(3, 5)).unwrap(), vec![0.0; 3]);
        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(singular_values(&bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn tall_and_wide_agree() {
        let m = CMatrix::from_fn(3, 7, |i, j| {
            C64::new((i * 7 + j) as f64 * 0.1, (i as f64) - (j as f64) * 0.3)
        });
        let a = singular_values(&m).unwrap();
        let b = singular_values(&m.transpose().to_owned()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        let frob = m.norm_l2().powi(2);
        let total: f64 = a.iter().map(|s| s * s).sum();
        assert_abs_diff_eq!(frob, total, epsilon = 1e-10 * frob);
    }

    #[test]
    fn eigh_sorts_descending() {
        let m = from_rows(2, 2, &[c(1.0), c(2.0), c(2.0), c(1.0)]);
        let (vals, vecs) = eigh(&m).unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vecs[(0, 0)].norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn expm_of_sigma_x() {
        let sx = from_rows(2, 2, &[c(0.), c(1.), c(1.), c(0.)]);
        let u = expm_hermitian(&sx, std::f64::consts::FRAC_PI_2).unwrap();
        let expect = scale(&sx, C64::new(0.0, -1.0));
        assert!(max_abs_diff(&u, &expect) < 1e-15);
        assert!(unitarity_defect(&u) < 1e-12);
        assert_eq!(expm_hermitian(&sx, 0.0).unwrap(), CMatrix::identity(2, 2));
    }

    #[test]
    fn kron_layout() {
        let a = from_rows(2, 2, &[c(1.), c(2.), c(3.), c(4.)]);
        let id = CMatrix::identity(2, 2);
        let k = kron(&a, &id);
        assert_eq!(k[(0, 2)], c(2.));
        assert_eq!(k[(1, 3)], c(2.));
        assert_eq!(k[(0, 1)], c(0.));
    }
}
