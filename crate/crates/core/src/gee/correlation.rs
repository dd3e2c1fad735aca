//! Working correlation among the `K` responses observed at one time point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::error::{MblError, Result};
use crate::family::MeanModel;
use crate::linalg::inverse_symmetric;

/// Which form `R(alpha)` takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrStructure {
    #[default]
    #[serde(alias = "indep")]
    Independence,
    #[serde(alias = "exch")]
    Exchangeable,
    #[serde(alias = "unstr")]
    Unstructured,
}

/// A working correlation with its current parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkingCorrelation {
    Independence,
    Exchangeable(f64),
    /// `K x K`, symmetric, unit diagonal.
    Unstructured(DMatrix<f64>),
}

const ALPHA_MARGIN: f64 = 1e-3;

/// Clips an exchangeable correlation into `(-1/(K-1) + 1e-3, 1 - 1e-3)`.
pub fn project_alpha(alpha: f64, k: usize) -> f64 {
    let lower = if k > 1 { -1.0 / (k as f64 - 1.0) + ALPHA_MARGIN } else { -1.0 + ALPHA_MARGIN };
    alpha.clamp(lower, 1.0 - ALPHA_MARGIN)
}

impl WorkingCorrelation {
    /// Exchangeable correlation with `alpha` projected so `R` stays positive definite.
    pub fn exchangeable(alpha: f64, k: usize) -> Self {
        WorkingCorrelation::Exchangeable(project_alpha(alpha, k))
    }

    pub fn structure(&self) -> CorrStructure {
        match self {
            WorkingCorrelation::Independence => CorrStructure::Independence,
            WorkingCorrelation::Exchangeable(_) => CorrStructure::Exchangeable,
            WorkingCorrelation::Unstructured(_) => CorrStructure::Unstructured,
        }
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        match self {
            WorkingCorrelation::Independence => DMatrix::identity(k, k),
            WorkingCorrelation::Exchangeable(alpha) => DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { *alpha }),
            WorkingCorrelation::Unstructured(r) => r.clone(),
        }
    }

    /// `R^{-1}`, or `None` for independence.
    pub(crate) fn inverse(&self, k: usize) -> Option<DMatrix<f64>> {
        match self {
            WorkingCorrelation::Independence => None,
            _ => {
                let (inv, _) = inverse_symmetric(&self.matrix(k)).unwrap_or_else(|| (DMatrix::identity(k, k), true));
                Some(inv)
            }
        }
    }
}

/// `V = A^{1/2} R A^{1/2}` with `A = diag(pi_k (1 - pi_k))`.
pub fn working_cov(pi: &[f64], corr: &WorkingCorrelation) -> DMatrix<f64> {
    let k = pi.len();
    let sd: Vec<f64> = pi.iter().map(|&p| (p * (1.0 - p)).sqrt()).collect();
    let r = corr.matrix(k);
    DMatrix::from_fn(k, k, |i, j| sd[i] * r[(i, j)] * sd[j])
}

fn standardized_residuals<'a, M: MeanModel + ?Sized>(
    dataset: &'a MblDataset,
    model: &'a M,
    theta: &[f64],
) -> impl Iterator<Item = Vec<f64>> + 'a {
    let mut pi = vec![0.0; model.n_responses()];
    let theta = theta.to_vec();
    dataset.observations().map(move |(d, t, y)| {
        model.mean(&theta, t, d, &mut pi);
        pi.iter().zip(y).map(|(&p, &yk)| (yk as f64 - p) / (p * (1.0 - p)).sqrt()).collect()
    })
}

/// Raw moment estimate of the exchangeable correlation,
/// `sum_{i,j} sum_{k1<k2} r_k1 r_k2 / (N* - p)` with `N* = n_obs K (K - 1) / 2`.
pub fn estimate_alpha<M: MeanModel + ?Sized>(dataset: &MblDataset, model: &M, theta: &[f64]) -> Result<f64> {
    let k = model.n_responses();
    let p = model.n_params();
    let n_star = dataset.n_obs() * k * k.saturating_sub(1) / 2;
    if n_star <= p {
        return Err(MblError::Config(format!("too few response pairs ({n_star}) for {p} mean parameters")));
    }
    let mut sum = 0.0;
    for r in standardized_residuals(dataset, model, theta) {
        for k1 in 0..k {
            for k2 in k1 + 1..k {
                sum += r[k1] * r[k2];
            }
        }
    }
    Ok(sum / (n_star - p) as f64)
}

/// Pairwise moment estimates with denominator `n_obs - p` per pair. The result
/// is projected into the positive-definite cone by shrinking toward the identity.
pub fn estimate_unstructured<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let k = model.n_responses();
    let p = model.n_params();
    let n = dataset.n_obs();
    if n <= p {
        return Err(MblError::Config(format!("too few observations ({n}) for {p} mean parameters")));
    }
    let mut r: DMatrix<f64> = DMatrix::identity(k, k);
    for res in standardized_residuals(dataset, model, theta) {
        for k1 in 0..k {
            for k2 in k1 + 1..k {
                r[(k1, k2)] += res[k1] * res[k2];
            }
        }
    }
    let denom = (n - p) as f64;
    for k1 in 0..k {
        for k2 in k1 + 1..k {
            let v = (r[(k1, k2)] / denom).clamp(-1.0 + ALPHA_MARGIN, 1.0 - ALPHA_MARGIN);
            r[(k1, k2)] = v;
            r[(k2, k1)] = v;
        }
    }
    // shrink off-diagonals toward zero until R is positive definite
    let raw = r.clone();
    let mut step = 0;
    while r.clone().cholesky().is_none() && step < 20 {
        step += 1;
        let keep = 1.0 - step as f64 * 0.05;
        r = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { keep * raw[(i, j)] });
    }
    Ok(r)
}

impl CorrStructure {
    /// Moment-estimates the correlation parameter at `theta`.
    pub fn estimate<M: MeanModel + ?Sized>(
        self,
        dataset: &MblDataset,
        model: &M,
        theta: &[f64],
    ) -> Result<WorkingCorrelation> {
        match self {
            CorrStructure::Independence => Ok(WorkingCorrelation::Independence),
            CorrStructure::Exchangeable => {
                let alpha = estimate_alpha(dataset, model, theta)?;
                Ok(WorkingCorrelation::exchangeable(alpha, model.n_responses()))
            }
            CorrStructure::Unstructured => {
                Ok(WorkingCorrelation::Unstructured(estimate_unstructured(dataset, model, theta)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use crate::family::SharedBetaSpec;
    use crate::model::ModelSpec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independence_cov_is_diagonal() {
        let v = working_cov(&[0.5, 0.5], &WorkingCorrelation::Independence);
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.25]));
    }

    #[test]
    fn exchangeable_zero_equals_independence() {
        let pi = [0.1, 0.7, 0.35];
        assert_eq!(
            working_cov(&pi, &WorkingCorrelation::Exchangeable(0.0)),
            working_cov(&pi, &WorkingCorrelation::Independence)
        );
    }

    #[test]
    fn exchangeable_off_diagonal() {
        let v = working_cov(&[0.5, 0.2], &WorkingCorrelation::Exchangeable(0.3));
        assert_relative_eq!(v[(0, 1)], 0.06, epsilon = 1e-15);
        assert_relative_eq!(v[(1, 0)], 0.06, epsilon = 1e-15);
        assert_relative_eq!(v[(1, 1)], 0.16, epsilon = 1e-15);
    }

    #[test]
    fn projection_bounds() {
        assert_eq!(project_alpha(1.0, 3), 1.0 - 1e-3);
        assert_relative_eq!(project_alpha(-0.9, 3), -0.5 + 1e-3);
        assert_eq!(project_alpha(0.2, 3), 0.2);
    }

    // p = 0 placeholder so the denominator is N* itself
    struct Fixed(Vec<f64>);

    impl MeanModel for Fixed {
        fn n_responses(&self) -> usize {
            self.0.len()
        }
        fn n_params(&self) -> usize {
            0
        }
        fn blocks(&self) -> Vec<crate::model::ParamBlock> {
            vec![]
        }
        fn param_labels(&self) -> Vec<String> {
            vec![]
        }
        fn mean(&self, _: &[f64], _: f64, _: f64, out: &mut [f64]) {
            out.copy_from_slice(&self.0);
        }
        fn mean_jacobian(&self, _: &[f64], _: f64, _: f64, mean: &mut [f64], _: &mut DMatrix<f64>) {
            mean.copy_from_slice(&self.0);
        }
    }

    #[test]
    fn single_cell_alpha_is_one() {
        let ds =
            MblDataset::new(2, vec![Subject { duration: 1.0, times: vec![0.5], outcomes: vec![vec![1, 1]] }]).unwrap();
        assert_relative_eq!(estimate_alpha(&ds, &Fixed(vec![0.5, 0.5]), &[]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_cross_products_give_zero_alpha() {
        // residual signs cancel across the two cells
        let ds = MblDataset::new(
            2,
            vec![Subject { duration: 1.0, times: vec![0.2, 0.4], outcomes: vec![vec![1, 1], vec![1, 0]] }],
        )
        .unwrap();
        assert_eq!(estimate_alpha(&ds, &Fixed(vec![0.5, 0.5]), &[]).unwrap(), 0.0);
    }

    #[test]
    fn too_few_pairs_is_config_error() {
        let ds =
            MblDataset::new(2, vec![Subject { duration: 1.0, times: vec![0.5], outcomes: vec![vec![1, 0]] }]).unwrap();
        let spec = SharedBetaSpec::new(2).unwrap();
        assert!(matches!(estimate_alpha(&ds, &spec, &[0.0; 5]), Err(MblError::Config(_))));
    }

    #[test]
    fn recovers_generating_correlation() {
        // each component copies a shared Bernoulli(0.5) draw with probability q,
        // so pairwise correlation is q^2
        let rho: f64 = 0.3;
        let q = rho.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let subjects: Vec<Subject> = (0..2000)
            .map(|_| {
                let times = vec![0.25, 0.5, 0.75];
                let outcomes = times
                    .iter()
                    .map(|_| {
                        let shared = u8::from(rng.gen::<f64>() < 0.5);
                        (0..3)
                            .map(|_| if rng.gen::<f64>() < q { shared } else { u8::from(rng.gen::<f64>() < 0.5) })
                            .collect()
                    })
                    .collect();
                Subject { duration: 1.0, times, outcomes }
            })
            .collect();
        let ds = MblDataset::new(3, subjects).unwrap();
        // a constant-zero link model gives pi = 0.5 everywhere
        let spec = ModelSpec::uniform(3, 0);
        let alpha = estimate_alpha(&ds, &spec, &vec![0.0; spec.n_params()]).unwrap();
        assert!((alpha - rho).abs() < 0.05, "alpha = {alpha}");

        let r = estimate_unstructured(&ds, &spec, &vec![0.0; spec.n_params()]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((r[(i, j)] - rho).abs() < 0.05);
            assert_eq!(r[(i, j)], r[(j, i)]);
        }
    }
}
