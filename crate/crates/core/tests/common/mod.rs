#![allow(dead_code)]

use latent_mbl::model::{expit, ParamBlock};
use latent_mbl::{MblDataset, MeanModel, Subject};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each response has its own logit-linear predictor in `(1, t, d)`, so
/// coefficient blocks of different responses never share information.
#[derive(Debug, Clone)]
pub struct LinearLogitModel {
    pub k: usize,
}

impl LinearLogitModel {
    fn eta(theta: &[f64], t: f64, d: f64, r: usize) -> f64 {
        theta[3 * r] + theta[3 * r + 1] * t + theta[3 * r + 2] * d
    }
}

impl MeanModel for LinearLogitModel {
    fn n_responses(&self) -> usize {
        self.k
    }

    fn n_params(&self) -> usize {
        3 * self.k
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        (0..self.k).map(|r| ParamBlock::new(format!("g{}", r + 1), 3 * r, 3)).collect()
    }

    fn param_labels(&self) -> Vec<String> {
        (0..3 * self.k).map(|i| format!("g{}", i)).collect()
    }

    fn mean(&self, theta: &[f64], t: f64, d: f64, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = expit(Self::eta(theta, t, d, r));
        }
    }

    fn mean_jacobian(&self, theta: &[f64], t: f64, d: f64, mean: &mut [f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for r in 0..self.k {
            let p = expit(Self::eta(theta, t, d, r));
            mean[r] = p;
            let w = p * (1.0 - p);
            jac[(r, 3 * r)] = w;
            jac[(r, 3 * r + 1)] = w * t;
            jac[(r, 3 * r + 2)] = w * d;
        }
    }
}

/// Draws a dataset with independent Bernoulli outcomes from any mean model.
pub fn draw<M: MeanModel>(model: &M, theta: &[f64], n_subjects: usize, seed: u64) -> MblDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.n_responses();
    let mut pi = vec![0.0; k];
    let subjects = (0..n_subjects)
        .map(|_| {
            let d = rng.gen_range(0.5..6.0);
            let n = rng.gen_range(2..8);
            let times: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
            let outcomes = times
                .iter()
                .map(|&t| {
                    model.mean(theta, t, d, &mut pi);
                    pi.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect()
                })
                .collect();
            Subject { duration: d, times, outcomes }
        })
        .collect();
    MblDataset::new(k, subjects).unwrap()
}

/// Newton-Raphson logistic maximum likelihood, written independently of the
/// library solver. Returns coefficients and the log-likelihood.
pub fn newton_logistic(x: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, f64) {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = x * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..x.nrows() {
            let xi = x.row(i).transpose();
            grad += &xi * (y[i] - mu[i]);
            hess += &xi * xi.transpose() * (mu[i] * (1.0 - mu[i]));
        }
        let step = hess.lu().solve(&grad).expect("nonsingular Hessian");
        beta += &step;
        if step.amax() < 1e-14 {
            break;
        }
    }
    let eta = x * &beta;
    let loglik = (0..x.nrows())
        .map(|i| {
            let e = eta[i];
            // log(1 + e^e) computed stably
            let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            y[i] * e - log1pexp
        })
        .sum();
    (beta, loglik)
}

/// Design `(1, t, t^2)` and outcomes of a single-response dataset.
pub fn quadratic_design(ds: &MblDataset) -> (DMatrix<f64>, Vec<f64>) {
    let n = ds.n_obs();
    let mut x = DMatrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for (row, (_, t, out)) in ds.observations().enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = t;
        x[(row, 2)] = t * t;
        y.push(out[0] as f64);
    }
    (x, y)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
