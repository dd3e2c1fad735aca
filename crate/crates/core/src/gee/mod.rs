//! Blocked Fisher-scoring estimation of the generalized estimating equations.

mod blocking;
mod correlation;
mod init;
mod scoring;

pub use blocking::{BlockingScheme, IndexBlock, SchemePreset};
pub use correlation::{
    estimate_alpha, estimate_unstructured, project_alpha, working_cov, CorrStructure, WorkingCorrelation,
};
pub use init::{empirical_frequencies, init_params, init_shared_beta, InitConfig, InitScale};
pub use scoring::{estimating_function, gee_step_blocked, gee_step_full, naive_variance, robust_variance, StepOutcome};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::error::{MblError, Result};
use crate::family::MeanModel;
use crate::model::{ModelSpec, ParamVector};

/// Consecutive growing relative differences treated as divergence.
const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// `None` updates all coefficients together.
    pub scheme: Option<BlockingScheme>,
    pub corr: CorrStructure,
    /// Stop when `||c_j - c_{j-1}|| / ||c_j|| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { scheme: None, corr: CorrStructure::Independence, tol: 0.01, max_iter: 200 }
    }
}

impl FitConfig {
    pub fn with_scheme(mut self, scheme: BlockingScheme) -> Self {
        self.scheme = Some(scheme);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_corr(mut self, corr: CorrStructure) -> Self {
        self.corr = corr;
        self
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Flat coefficient estimates in the model's canonical order.
    pub coefficients: Vec<f64>,
    /// Sandwich covariance of the estimates.
    pub robust_cov: DMatrix<f64>,
    /// Working correlation at the final estimates.
    pub correlation: WorkingCorrelation,
    pub iterations: usize,
    pub converged: bool,
    /// Relative difference after each sweep.
    pub trace: Vec<f64>,
    /// Mean-parameter count.
    pub p: usize,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.p).map(|i| self.robust_cov[(i, i)].max(0.0).sqrt()).collect()
    }

    /// Exchangeable `alpha`, when that structure was used.
    pub fn alpha(&self) -> Option<f64> {
        match self.correlation {
            WorkingCorrelation::Exchangeable(a) => Some(a),
            _ => None,
        }
    }

    /// Coefficients regrouped for a latent-model spec.
    pub fn params(&self, spec: &ModelSpec) -> Result<ParamVector> {
        ParamVector::from_flat(spec, &self.coefficients)
    }
}

fn relative_difference(new: &[f64], old: &[f64]) -> f64 {
    let diff = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = new.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// Iterates blocked scoring sweeps from `init` until the relative change in
/// the coefficients is at most `config.tol`, then computes the sandwich
/// covariance at the final estimates.
///
/// Returns a result with `converged == false` when `max_iter` is exhausted.
pub fn fit<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    init: &[f64],
    config: &FitConfig,
) -> Result<FitResult> {
    let p = model.n_params();
    if init.len() != p {
        return Err(MblError::Config(format!("initial vector has {} entries, model needs {p}", init.len())));
    }
    if dataset.n_responses != model.n_responses() {
        return Err(MblError::Config(format!(
            "model has {} responses but data has {}",
            model.n_responses(),
            dataset.n_responses
        )));
    }
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(MblError::Config("tolerance must be positive".into()));
    }
    let scheme = config.scheme.clone().unwrap_or_else(|| BlockingScheme::single(p));
    scheme.validate(p)?;

    let mut theta = init.to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut growing = 0usize;

    for _ in 0..config.max_iter {
        let step = match gee_step_blocked(dataset, model, &theta, config.corr, &scheme) {
            Ok(s) => s,
            Err(MblError::Diverged { .. }) => return Err(MblError::Diverged { trace }),
            Err(e) => return Err(e),
        };
        if !step.theta.iter().all(|v| v.is_finite()) {
            return Err(MblError::Diverged { trace });
        }
        let rel = relative_difference(&step.theta, &theta);
        if let Some(&last) = trace.last() {
            growing = if rel > last { growing + 1 } else { 0 };
        }
        trace.push(rel);
        theta = step.theta;
        if rel <= config.tol {
            converged = true;
            break;
        }
        if growing >= DIVERGENCE_RUN {
            return Err(MblError::Diverged { trace });
        }
    }

    let correlation = config.corr.estimate(dataset, model, &theta)?;
    let robust_cov = robust_variance(dataset, model, &theta, &correlation)?;
    Ok(FitResult { coefficients: theta, robust_cov, correlation, iterations: trace.len(), converged, trace, p })
}
