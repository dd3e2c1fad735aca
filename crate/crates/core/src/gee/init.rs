//! Starting values for the scoring iteration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::error::{MblError, Result};
use crate::family::SharedBetaModel;
use crate::logistic::logistic_regression;
use crate::model::{clamp_time, logit, ma_kernel, ModelSpec, ParamVector};

/// Scale on which empirical probabilities are regressed on the initial curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScale {
    /// Raw relative frequencies.
    #[default]
    Probability,
    /// Log-odds of the relative frequencies.
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Initial `a_0`; the curve exponent is `r = e^a0`.
    pub a0: f64,
    /// Initial `b_0`.
    pub b0: f64,
    /// Half-width of the time window for empirical frequencies.
    pub bandwidth: f64,
    /// Time points at which empirical frequencies are computed.
    pub grid: Vec<f64>,
    pub scale: InitScale,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            a0: 1.5f64.ln(),
            b0: 3f64.ln(),
            bandwidth: 0.1,
            grid: (1..=49).map(|j| j as f64 * 2.0 / 100.0).collect(),
            scale: InitScale::Probability,
        }
    }
}

/// Relative frequency of each response among observations with time in
/// `[t - h, t + h]`, or `None` for an empty window.
pub fn empirical_frequencies(dataset: &MblDataset, t: f64, h: f64) -> Option<(Vec<f64>, usize)> {
    let mut counts = vec![0usize; dataset.n_responses];
    let mut n = 0usize;
    for (_, tij, y) in dataset.observations() {
        if tij >= t - h && tij <= t + h {
            n += 1;
            for (c, &v) in counts.iter_mut().zip(y) {
                *c += v as usize;
            }
        }
    }
    (n > 0).then(|| (counts.iter().map(|&c| c as f64 / n as f64).collect(), n))
}

/// Starting coefficients for the latent model: fixed `(a_0, b_0)`, zero
/// higher-order curve terms, and per-response least-squares intercept and
/// slope of the empirical frequencies on the initial curve. Higher-order link
/// coefficients start at zero.
pub fn init_params(dataset: &MblDataset, spec: &ModelSpec, config: &InitConfig) -> Result<ParamVector> {
    if dataset.n_responses != spec.n_responses() {
        return Err(MblError::Config(format!(
            "model has {} responses but data has {}",
            spec.n_responses(),
            dataset.n_responses
        )));
    }
    let (r, s) = (config.a0.exp(), config.b0.exp());
    let mut xs = Vec::new();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); spec.n_responses()];
    for &t in &config.grid {
        if let Some((freq, _)) = empirical_frequencies(dataset, t, config.bandwidth) {
            xs.push(ma_kernel(clamp_time(t), r, s));
            for (col, f) in ys.iter_mut().zip(freq) {
                col.push(match config.scale {
                    InitScale::Probability => f,
                    InitScale::Logit => logit(f),
                });
            }
        }
    }
    if xs.len() < 2 {
        return Err(MblError::Init(format!("only {} grid points have observations", xs.len())));
    }

    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(MblError::Init("initial curve is constant over the grid".into()));
    }

    let mut params = ParamVector::zeros(spec);
    params.a[0] = config.a0;
    params.b[0] = config.b0;
    for (c, y) in params.link.iter_mut().zip(&ys) {
        let y_mean = y.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(y).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
        let slope = sxy / sxx;
        if c.len() > 1 {
            c[0] = y_mean - slope * x_mean;
            c[1] = slope;
        } else {
            c[0] = y_mean;
        }
    }
    Ok(params)
}

/// Starting values for the shared-curvature model: per-response logistic
/// regression on `(1, t, t^2)` gives `c_0k`, `c_1k` and a response-specific
/// `beta_k = gamma_2 / gamma_1`; the shared `beta` starts at their average.
pub fn init_shared_beta(dataset: &MblDataset) -> Result<SharedBetaModel> {
    let n = dataset.n_obs();
    let mut x = DMatrix::zeros(n, 3);
    let mut ys: Vec<Vec<f64>> = vec![Vec::with_capacity(n); dataset.n_responses];
    for (row, (_, t, y)) in dataset.observations().enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = t;
        x[(row, 2)] = t * t;
        for (col, &v) in ys.iter_mut().zip(y) {
            col.push(v as f64);
        }
    }
    let mut model = SharedBetaModel { intercepts: vec![], slopes: vec![], beta: 0.0 };
    let mut betas = Vec::new();
    for y in &ys {
        let g = logistic_regression(&x, y, 1e-10, 100)?;
        model.intercepts.push(g[0]);
        model.slopes.push(g[1]);
        if g[1].abs() > 1e-8 {
            betas.push(g[2] / g[1]);
        }
    }
    if betas.is_empty() {
        return Err(MblError::Init("no response has a usable linear time effect".into()));
    }
    model.beta = betas.iter().sum::<f64>() / betas.len() as f64;
    Ok(model)
}
