use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Scale-aware ridge for near-singular designs: `1e-8 * trace(XᵀX) / d`.
pub fn auto_jitter(x: &DMatrix<f64>) -> f64 {
    let d = x.ncols().max(1);
    1e-8 * x.iter().map(|v| v * v).sum::<f64>() / d as f64
}

/// `(XᵀX + jitter·I)⁻¹ Xᵀy` via a Cholesky solve.
pub fn least_squares_fit(x: &DMatrix<f64>, y: &DVector<f64>, jitter: f64) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::invalid("least squares needs at least one row"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { context: "least squares rows vs targets", expected: x.nrows(), got: y.len() });
    }
    if !(jitter >= 0.0) {
        return Err(Error::invalid("jitter must be non-negative"));
    }
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += jitter;
    }
    let rhs = x.tr_mul(y);
    spd_solve(&gram, &rhs).map_err(|e| match e {
        Error::SingularSystem(msg) => Error::SingularSystem(format!("XᵀX + {jitter}·I: {msg}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_returns_targets() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.5, -2.0, 7.0]);
        assert_eq!(least_squares_fit(&x, &y, 0.0).unwrap(), y);
    }

    #[test]
    fn zero_design_with_ridge_is_zero() {
        let x = DMatrix::zeros(4, 2);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let w = least_squares_fit(&x, &y, 1.0).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_without_jitter_errors() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let err = least_squares_fit(&x, &y, 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem(_)));
        assert!(err.to_string().contains("jitter"));
        assert!(least_squares_fit(&x, &y, auto_jitter(&x)).is_ok());
    }

    #[test]
    fn exact_recovery_noiseless() {
        // Fixed well-conditioned design with known weights.
        let rows = 12;
        let x = DMatrix::from_fn(rows, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0 + 0.1 * c as f64);
        let theta = DVector::from_vec(vec![0.3, -1.2, 2.5]);
        let y = &x * &theta;
        let w = least_squares_fit(&x, &y, 0.0).unwrap();
        assert!((w - theta).norm() < 1e-8);
    }
}
