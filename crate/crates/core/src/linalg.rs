//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivots of the Cholesky factor below this fraction of the largest pivot
/// (squared) mark the matrix as numerically singular.
const PIVOT_RTOL: f64 = 1e-13;

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky
/// factorization. Fails if `a` is indefinite or numerically singular.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "spd_solve (square)",
            expected: n,
            got: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "spd_solve (rhs)",
            expected: n,
            got: b.len(),
        });
    }
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let pivots = (0..n).map(|i| l[(i, i)] * l[(i, i)]);
    let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
    if n > 0 && (hi == 0.0 || lo <= PIVOT_RTOL * hi) {
        return Err(Error::SingularSystem(format!(
            "pivot ratio {:.3e} below {PIVOT_RTOL:e}",
            if hi == 0.0 { 0.0 } else { lo / hi }
        )));
    }
    Ok(chol.solve(b))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral (l2-operator) norm of a symmetric matrix.
pub fn sym_op_norm(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Builds a row-major `rows x cols` matrix.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve(&a, &b).unwrap();
        let r = &a * &x - &b;
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(spd_solve(&a, &b), Err(Error::SingularSystem(_))));
        assert!(spd_solve(&DMatrix::zeros(2, 2), &b).is_err());
    }

    #[test]
    fn op_norm_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 2.0]));
        assert_eq!(sym_op_norm(&a), 3.0);
    }
}
