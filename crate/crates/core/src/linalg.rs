//! Small dense linear-algebra helpers for information matrices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Pivot threshold (relative to the equilibrated unit diagonal) below which
/// a Cholesky factorization is treated as singular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Symmetric Jacobi scaling `D^{-1/2} A D^{-1/2}` with `D = diag(A)`.
/// Returns the scaled matrix and `D^{-1/2}`, or `None` if some diagonal entry
/// is not strictly positive.
fn equilibrate(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let n = a.nrows();
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        s.push(1.0 / d.sqrt());
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * s[i] * s[j]);
    Some((scaled, s))
}

fn guarded_cholesky(a: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let sym = 0.5 * (a + a.transpose());
    let chol = sym.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_FLOOR).then_some(chol)
}

/// Solves `A X = B` for symmetric positive definite `A`, or returns `None`
/// when `A` is (numerically) singular or indefinite.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (scaled, s) = equilibrate(a)?;
    let chol = guarded_cholesky(&scaled)?;
    let mut rhs = b.clone();
    for (i, &si) in s.iter().enumerate() {
        rhs.row_mut(i).scale_mut(si);
    }
    let mut x = chol.solve(&rhs);
    for (i, &si) in s.iter().enumerate() {
        x.row_mut(i).scale_mut(si);
    }
    Some(x)
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let inv = spd_solve(a, &DMatrix::identity(n, n))?;
    Some(0.5 * (&inv + inv.transpose()))
}

/// Orthonormal basis (as rows) of the numerical null space of a symmetric
/// matrix, using eigenvalues below `rel_tol * max |eigenvalue|` after Jacobi
/// scaling. The basis vectors are mapped back to the original coordinates
/// and renormalized.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> Vec<Vec<f64>> {
    let n = a.nrows();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[(i, i)].abs();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]) * s[i] * s[j]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let mut out = Vec::new();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev.abs() <= rel_tol * max {
            let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, k)] * s[i]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

/// `A - B D^{-1} B^T` for the block matrix `[[A, B], [B^T, D]]`.
pub fn schur_complement(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let x = spd_solve(d, &b.transpose())?;
    Some(a - b * x)
}

/// `max |A - A^T| / max |A|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Smallest eigenvalue of the symmetric part divided by the spectral norm.
pub fn min_relative_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (a + a.transpose());
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    if max == 0.0 {
        return 0.0;
    }
    eig.eigenvalues.min() / max
}

/// True if `A` is symmetric to `sym_tol` and all eigenvalues exceed
/// `-psd_tol * ||A||`.
pub fn is_symmetric_psd(a: &DMatrix<f64>, sym_tol: f64, psd_tol: f64) -> bool {
    asymmetry(a) <= sym_tol && min_relative_eigenvalue(a) >= -psd_tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_of_badly_scaled_spd() {
        let a = DMatrix::from_row_slice(3, 3, &[1e8, 1e2, 0.0, 1e2, 1.0, 1e-4, 0.0, 1e-4, 1e-6]);
        let inv = spd_inverse(&a).unwrap();
        let id = &a * &inv;
        assert_relative_eq!(id, DMatrix::identity(3, 3), epsilon = 1e-9);
    }

    #[test]
    fn singular_matrix_is_detected_with_its_null_space() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, -1.0, 1.0, -1.0, 2.0]);
        // Row 3 = row 1 - row 2.
        assert!(spd_inverse(&a).is_none());
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.len(), 1);
        let v = DMatrix::from_row_slice(3, 1, &ns[0]);
        assert!((&a * v).norm() < 1e-12);
    }

    #[test]
    fn schur_matches_block_inverse() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.5, 0.2, 1.0, 3.0, 0.3, 0.1, 0.5, 0.3, 2.0, 0.4, 0.2, 0.1, 0.4, 1.5,
            ],
        );
        let s = schur_complement(
            &a.view((0, 0), (2, 2)).into_owned(),
            &a.view((0, 2), (2, 2)).into_owned(),
            &a.view((2, 2), (2, 2)).into_owned(),
        )
        .unwrap();
        let full = spd_inverse(&a).unwrap();
        let lead = spd_inverse(&s).unwrap();
        assert_relative_eq!(
            full.view((0, 0), (2, 2)).into_owned(),
            lead,
            epsilon = 1e-12
        );
    }
}
