//! Plain logistic regression by Newton-Raphson, used for starting values.

use nalgebra::{DMatrix, DVector};

use crate::error::{MblError, Result};
use crate::linalg::solve_symmetric;
use crate::model::expit;

/// Maximum-likelihood coefficients for `P(y = 1) = expit(x beta)`.
///
/// `x` is `n x q` (include a column of ones for an intercept).
pub fn logistic_regression(x: &DMatrix<f64>, y: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let (n, q) = x.shape();
    if n != y.len() {
        return Err(MblError::InvalidInput("design and response lengths differ".into()));
    }
    let mut beta = DVector::zeros(q);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mut grad = DVector::zeros(q);
        let mut info = DMatrix::zeros(q, q);
        for i in 0..n {
            let p = expit(eta[i]);
            let w = p * (1.0 - p);
            let row = x.row(i);
            grad += row.transpose() * (y[i] - p);
            info += row.transpose() * row * w;
        }
        let step = solve_symmetric(&info, &grad).ok_or_else(|| MblError::Singular { block: "logistic".into() })?;
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(MblError::Diverged { trace: vec![] });
        }
        if step.norm() <= tol * (1.0 + beta.norm()) {
            return Ok(beta.iter().copied().collect());
        }
    }
    Err(MblError::NotConverged)
}
