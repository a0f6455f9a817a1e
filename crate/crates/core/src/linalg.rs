//! Dense linear algebra helpers on top of nalgebra.

use crate::prelude::*;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// `r e^{iθ}`.
pub fn polar(r: f64, theta: f64) -> C64 {
    C64::new(r * theta.cos(), r * theta.sin())
}

/// `|z|`.
pub fn modulus(z: &C64) -> f64 {
    z.norm_sqr().sqrt()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entrywise modulus of `M - M*`, relative to the largest entry of `M`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.iter().fold(0.0f64, |a, z| a.max(modulus(z)));
    if scale == 0.0 {
        return 0.0;
    }
    let d = (m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(modulus(z)));
    d / scale
}

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    m.is_square() && hermitian_defect(m) <= rel_tol
}

/// `tr(AB)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Frobenius norm `sqrt(tr(M* M))`.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Lower Cholesky factor `L` with `M = L L*`.
pub fn cholesky(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("non-finite entry in matrix to factor".into()));
    }
    let sym = hermitian_part(m);
    let chol = Cholesky::new(sym)
        .ok_or_else(|| Error::DegenerateFrame("matrix is not positive definite".into()))?;
    let l = chol.l();
    let (lo, hi) = (0..l.nrows()).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
        let d = l[(i, i)].re;
        (lo.min(d), hi.max(d))
    });
    // Squared diagonal ratio bounds the condition number from below.
    if lo.is_nan() || lo <= 0.0 || (hi / lo) * (hi / lo) > 1e14 {
        return Err(Error::DegenerateFrame(format!(
            "positive definite matrix too ill-conditioned (diagonal ratio {:.3e})",
            hi / lo
        )));
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &CMatrix) -> Result<CMatrix> {
    let n = l.nrows();
    let mut inv = identity(n);
    if !l.solve_lower_triangular_mut(&mut inv) {
        return Err(Error::DegenerateFrame("singular triangular factor".into()));
    }
    Ok(inv)
}

/// `log det M` for a hermitian positive definite `M`.
pub fn log_det_hpd(m: &CMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a hermitian positive definite matrix.
pub fn hpd_inverse(m: &CMatrix) -> Result<CMatrix> {
    let linv = lower_inverse(&cholesky(m)?)?;
    Ok(linv.adjoint() * linv)
}

/// Eigenvalues of a hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Operator norm of a hermitian matrix.
pub fn op_norm_hermitian(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// Each eigenvector is normalized and its first non-negligible coordinate
/// made positive, so results are reproducible up to degenerate subspaces.
pub fn symmetric_eigen(m: &RMatrix) -> Result<(Vec<f64>, RMatrix)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in symmetric matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = RMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        let big = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * big) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

/// `Xᵀ X` through the blocked product kernel.
pub fn gram_of_rows(x: &RMatrix) -> RMatrix {
    let xt = x.transpose();
    xt * x
}

/// Least-squares solution of `A c ≈ b` via SVD.
pub fn least_squares(a: &RMatrix, b: &RVector) -> Result<RVector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if a.nrows() < a.ncols() {
        return Err(Error::Domain(format!(
            "underdetermined least squares: {} equations, {} unknowns",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.is_nan() || smin <= 1e-13 * smax {
        return Err(Error::Precision(
            "least-squares design matrix is numerically rank deficient".into(),
        ));
    }
    svd.solve(b, 0.0)
        .map_err(|e| Error::Numeric(e.to_string()))
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix
/// with diagonal `d` and off-diagonal `e` (Sturm sequence count).
fn sturm_count(d: &[f64], e2: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let prev = if q == 0.0 { f64::EPSILON * (e2[i - 1].sqrt() + 1.0) } else { q };
        q = d[i] - x - e2[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Lowest `count` eigenvalues of a symmetric tridiagonal matrix, by bisection.
pub fn tridiagonal_lowest(d: &[f64], e: &[f64], count: usize) -> Result<Vec<f64>> {
    let n = d.len();
    if e.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n.saturating_sub(1),
            found: e.len(),
        });
    }
    let count = count.min(n);
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let (mut a, mut b) = (lo, hi);
        while b - a > 4.0 * f64::EPSILON * scale {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(d, &e2, mid) > j {
                b = mid;
            } else {
                a = mid;
            }
        }
        out.push(0.5 * (a + b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense() {
        let d = [2.0, -1.0, 3.5, 0.25, 1.0];
        let e = [0.5, 1.5, -0.7, 0.3];
        let mut m = RMatrix::zeros(5, 5);
        for i in 0..5 {
            m[(i, i)] = d[i];
            if i < 4 {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        let (dense, _) = symmetric_eigen(&m).unwrap();
        let bis = tridiagonal_lowest(&d, &e, 5).unwrap();
        for (a, b) in dense.iter().zip(&bis) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn eigenvector_sign_convention() {
        let m = RMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        for c in 0..2 {
            assert!(vecs[(0, c)] > 0.0);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let one = C64::new(1.0, 0.0);
        let m = CMatrix::from_row_slice(2, 2, &[one, C64::new(2.0, 0.0), C64::new(2.0, 0.0), one]);
        assert!(matches!(cholesky(&m), Err(Error::DegenerateFrame(_))));
    }

    #[test]
    fn least_squares_recovers_line() {
        let a = RMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let b = RVector::from_fn(6, |i, _| 3.0 - 0.5 * i as f64);
        let c = least_squares(&a, &b).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12);
    }
}
