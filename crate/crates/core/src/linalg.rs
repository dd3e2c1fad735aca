//! Small dense solves with a deterministic ridge repair.

use nalgebra::{DMatrix, DVector};

fn ridge_for(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    let scale = m.trace().abs() / n;
    1e-8 * if scale > 0.0 { scale } else { 1.0 }
}

fn all_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    values.all(|v| v.is_finite())
}

fn try_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let x = ch.solve(rhs);
        if all_finite(x.iter()) {
            return Some(x);
        }
    }
    // indefinite or numerically semidefinite: fall back to pivoted LU
    let x = m.clone().lu().solve(rhs)?;
    all_finite(x.iter()).then_some(x)
}

/// Solves `m x = rhs` for symmetric `m`; on failure adds `1e-8 * trace / n`
/// to the diagonal and retries once.
pub fn solve_symmetric(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if !all_finite(m.iter()) || !all_finite(rhs.iter()) {
        return None;
    }
    try_solve(m, rhs).or_else(|| {
        let mut repaired = m.clone();
        let ridge = ridge_for(m);
        for i in 0..repaired.nrows() {
            repaired[(i, i)] += ridge;
        }
        try_solve(&repaired, rhs)
    })
}

/// Inverse of a symmetric matrix with the same repair rule as [`solve_symmetric`].
/// The second element reports whether the ridge was needed.
pub fn inverse_symmetric(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, bool)> {
    let invert = |a: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let inv = match a.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => a.clone().try_inverse()?,
        };
        all_finite(inv.iter()).then_some(inv)
    };
    if !all_finite(m.iter()) {
        return None;
    }
    if let Some(inv) = invert(m) {
        return Some((symmetrize(inv), false));
    }
    let mut repaired = m.clone();
    let ridge = ridge_for(m);
    for i in 0..repaired.nrows() {
        repaired[(i, i)] += ridge;
    }
    invert(&repaired).map(|inv| (symmetrize(inv), true))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = solve_symmetric(&m, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((&m * &x - DVector::from_vec(vec![1.0, 2.0])).norm() < 1e-12);
    }

    #[test]
    fn repairs_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = solve_symmetric(&m, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        let (_, ridged) = inverse_symmetric(&m).unwrap();
        assert!(ridged);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(solve_symmetric(&m, &DVector::from_vec(vec![1.0])).is_none());
    }
}
