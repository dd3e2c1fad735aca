//! Mean-model abstraction shared by the estimation, selection and
//! goodness-of-fit code.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MblError, Result};
use crate::model::{self, expit, ModelSpec, ParamBlock};

/// A parametric model for the `K` response probabilities at `(t, d)`.
///
/// Implementations work on a flat coefficient slice of length [`n_params`](MeanModel::n_params).
pub trait MeanModel: Send + Sync {
    fn n_responses(&self) -> usize;

    fn n_params(&self) -> usize;

    /// Natural coefficient groups, contiguous and covering the flat vector.
    fn blocks(&self) -> Vec<ParamBlock>;

    fn param_labels(&self) -> Vec<String>;

    fn mean(&self, theta: &[f64], t: f64, d: f64, out: &mut [f64]);

    /// Writes the mean vector into `mean` and `d pi / d theta` (`K x p`) into `jac`.
    fn mean_jacobian(&self, theta: &[f64], t: f64, d: f64, mean: &mut [f64], jac: &mut DMatrix<f64>);
}

impl MeanModel for ModelSpec {
    fn n_responses(&self) -> usize {
        ModelSpec::n_responses(self)
    }

    fn n_params(&self) -> usize {
        ModelSpec::n_params(self)
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        self.block_layout()
    }

    fn param_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..=self.order_a).map(|j| format!("a{j}")).collect();
        labels.extend((0..=self.order_b).map(|j| format!("b{j}")));
        for (k, &m) in self.order_link.iter().enumerate() {
            labels.extend((0..=m).map(|j| format!("c{j},{}", k + 1)));
        }
        labels
    }

    fn mean(&self, theta: &[f64], t: f64, d: f64, out: &mut [f64]) {
        model::latent_mean(self, theta, t, d, out)
    }

    fn mean_jacobian(&self, theta: &[f64], t: f64, d: f64, mean: &mut [f64], jac: &mut DMatrix<f64>) {
        model::latent_mean_jacobian(self, theta, t, d, mean, jac)
    }
}

/// Reduced model with a shared quadratic time effect:
/// `logit pi_k(t) = c_0k + c_1k (t + beta t^2)`.
///
/// Flat order is `(c_01, c_11, c_02, c_12, ..., c_0K, c_1K, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedBetaSpec {
    pub n_responses: usize,
}

impl SharedBetaSpec {
    pub fn new(n_responses: usize) -> Result<Self> {
        if n_responses == 0 {
            return Err(MblError::InvalidInput("model needs at least one response".into()));
        }
        Ok(Self { n_responses })
    }

    pub fn beta_index(&self) -> usize {
        2 * self.n_responses
    }
}

impl MeanModel for SharedBetaSpec {
    fn n_responses(&self) -> usize {
        self.n_responses
    }

    fn n_params(&self) -> usize {
        2 * self.n_responses + 1
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        let mut blocks: Vec<ParamBlock> =
            (0..self.n_responses).map(|k| ParamBlock::new(format!("c{}", k + 1), 2 * k, 2)).collect();
        blocks.push(ParamBlock::new("beta", self.beta_index(), 1));
        blocks
    }

    fn param_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_params());
        for k in 1..=self.n_responses {
            labels.push(format!("c0,{k}"));
            labels.push(format!("c1,{k}"));
        }
        labels.push("beta".into());
        labels
    }

    fn mean(&self, theta: &[f64], t: f64, _d: f64, out: &mut [f64]) {
        let x = t + theta[self.beta_index()] * t * t;
        for (k, o) in out.iter_mut().enumerate() {
            *o = expit(theta[2 * k] + theta[2 * k + 1] * x);
        }
    }

    fn mean_jacobian(&self, theta: &[f64], t: f64, _d: f64, mean: &mut [f64], jac: &mut DMatrix<f64>) {
        let bi = self.beta_index();
        let x = t + theta[bi] * t * t;
        jac.fill(0.0);
        for k in 0..self.n_responses {
            let pi = expit(theta[2 * k] + theta[2 * k + 1] * x);
            mean[k] = pi;
            let w = pi * (1.0 - pi);
            jac[(k, 2 * k)] = w;
            jac[(k, 2 * k + 1)] = w * x;
            jac[(k, bi)] = w * theta[2 * k + 1] * t * t;
        }
    }
}

/// Coefficients of the shared-curvature model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedBetaModel {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub beta: f64,
}

impl SharedBetaModel {
    pub fn spec(&self) -> Result<SharedBetaSpec> {
        if self.intercepts.len() != self.slopes.len() {
            return Err(MblError::InvalidInput("intercepts and slopes differ in length".into()));
        }
        SharedBetaSpec::new(self.intercepts.len())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.intercepts.iter().zip(&self.slopes).flat_map(|(&c0, &c1)| [c0, c1]).collect();
        out.push(self.beta);
        out
    }

    pub fn from_flat(theta: &[f64]) -> Result<Self> {
        if theta.len() < 3 || theta.len().is_multiple_of(2) {
            return Err(MblError::InvalidInput(format!("{} is not a valid shared-beta length", theta.len())));
        }
        let k = theta.len() / 2;
        Ok(Self {
            intercepts: (0..k).map(|i| theta[2 * i]).collect(),
            slopes: (0..k).map(|i| theta[2 * i + 1]).collect(),
            beta: theta[2 * k],
        })
    }

    pub fn probability(&self, t: f64, k: usize) -> f64 {
        expit(self.intercepts[k] + self.slopes[k] * (t + self.beta * t * t))
    }
}

/// Serializable choice of mean model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeanFamily {
    Latent(ModelSpec),
    SharedBeta(SharedBetaSpec),
}

impl MeanFamily {
    fn inner(&self) -> &dyn MeanModel {
        match self {
            MeanFamily::Latent(s) => s,
            MeanFamily::SharedBeta(s) => s,
        }
    }
}

impl MeanModel for MeanFamily {
    fn n_responses(&self) -> usize {
        self.inner().n_responses()
    }

    fn n_params(&self) -> usize {
        self.inner().n_params()
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        self.inner().blocks()
    }

    fn param_labels(&self) -> Vec<String> {
        self.inner().param_labels()
    }

    fn mean(&self, theta: &[f64], t: f64, d: f64, out: &mut [f64]) {
        self.inner().mean(theta, t, d, out)
    }

    fn mean_jacobian(&self, theta: &[f64], t: f64, d: f64, mean: &mut [f64], jac: &mut DMatrix<f64>) {
        self.inner().mean_jacobian(theta, t, d, mean, jac)
    }
}
