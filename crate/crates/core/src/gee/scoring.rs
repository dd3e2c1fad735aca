//! Fisher scoring for the estimating equations
//! `sum_ij D_ij' V_ij^{-1} (Y_ij - pi_ij) = 0`, where every time point of every
//! subject contributes one `K`-variate term.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::blocking::{BlockingScheme, IndexBlock};
use super::correlation::{CorrStructure, WorkingCorrelation};
use crate::data::{MblDataset, Subject};
use crate::error::{MblError, Result};
use crate::family::MeanModel;
use crate::linalg::{inverse_symmetric, solve_symmetric, symmetrize};
use crate::selection::quasi_likelihood;

/// Subjects per parallel work unit. Partial sums are reduced in chunk order,
/// so results do not depend on the number of worker threads.
const CHUNK: usize = 32;

const MAX_HALVINGS: usize = 10;
const SCORE_GROWTH_LIMIT: f64 = 10.0;
/// Relative rounding allowance when comparing quasi-likelihoods.
const Q_SLACK: f64 = 1e-12;

/// Block-restricted sums over all time points.
pub(crate) struct Normal {
    /// `sum D_b' V^{-1} D_b`
    pub info: DMatrix<f64>,
    /// `sum D_b' V^{-1} (Y - pi)`
    pub score: DVector<f64>,
    /// `sum D_b' V^{-1} e e' V^{-1} D_b`
    pub meat: DMatrix<f64>,
}

#[derive(Clone, Copy)]
struct Want {
    info: bool,
    meat: bool,
}

impl Normal {
    fn zeros(q: usize, want: Want) -> Self {
        let sq = |on: bool| if on { DMatrix::zeros(q, q) } else { DMatrix::zeros(0, 0) };
        Self { info: sq(want.info), score: DVector::zeros(q), meat: sq(want.meat) }
    }

    fn add(&mut self, other: &Normal) {
        if !self.info.is_empty() {
            self.info += &other.info;
        }
        if !self.meat.is_empty() {
            self.meat += &other.meat;
        }
        self.score += &other.score;
    }
}

fn accumulate<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    corr: &WorkingCorrelation,
    cols: &[usize],
    want: Want,
) -> Normal {
    let k = model.n_responses();
    let p = model.n_params();
    let q = cols.len();
    let r_inv = corr.inverse(k);

    let partials: Vec<Normal> = dataset
        .subjects
        .par_chunks(CHUNK)
        .map(|chunk: &[Subject]| {
            let mut acc = Normal::zeros(q, want);
            let mut mean = vec![0.0; k];
            let mut jac = DMatrix::zeros(k, p);
            let mut db = DMatrix::zeros(k, q);
            let mut w = DMatrix::zeros(k, q);
            let mut resid = DVector::zeros(k);
            let mut inv_sd = vec![0.0; k];
            for s in chunk {
                for (&t, y) in s.times.iter().zip(&s.outcomes) {
                    model.mean_jacobian(theta, t, s.duration, &mut mean, &mut jac);
                    for (c, &col) in cols.iter().enumerate() {
                        for r in 0..k {
                            db[(r, c)] = jac[(r, col)];
                        }
                    }
                    for r in 0..k {
                        inv_sd[r] = 1.0 / (mean[r] * (1.0 - mean[r])).sqrt();
                        resid[r] = y[r] as f64 - mean[r];
                    }
                    // W = V^{-1} D_b with V^{-1} = S^{-1} R^{-1} S^{-1}
                    match &r_inv {
                        None => {
                            for c in 0..q {
                                for r in 0..k {
                                    w[(r, c)] = db[(r, c)] * inv_sd[r] * inv_sd[r];
                                }
                            }
                        }
                        Some(ri) => {
                            let mut scaled = db.clone();
                            for c in 0..q {
                                for r in 0..k {
                                    scaled[(r, c)] *= inv_sd[r];
                                }
                            }
                            w.gemm(1.0, ri, &scaled, 0.0);
                            for c in 0..q {
                                for r in 0..k {
                                    w[(r, c)] *= inv_sd[r];
                                }
                            }
                        }
                    }
                    if want.info {
                        acc.info.gemm_tr(1.0, &db, &w, 1.0);
                    }
                    let u = w.tr_mul(&resid);
                    if want.meat {
                        acc.meat.ger(1.0, &u, &u, 1.0);
                    }
                    acc.score += u;
                }
            }
            acc
        })
        .collect();

    let mut total = Normal::zeros(q, want);
    for part in &partials {
        total.add(part);
    }
    total
}

/// The estimating-function vector at `theta` for a fixed working correlation.
pub fn estimating_function<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    corr: &WorkingCorrelation,
) -> DVector<f64> {
    let all: Vec<usize> = (0..model.n_params()).collect();
    accumulate(dataset, model, theta, corr, &all, Want { info: false, meat: false }).score
}

/// Result of one scoring sweep.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub theta: Vec<f64>,
    /// Working correlation used for the last block update.
    pub correlation: WorkingCorrelation,
}

fn update_block<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &mut [f64],
    corr: &WorkingCorrelation,
    block: &IndexBlock,
) -> Result<()> {
    let n = accumulate(dataset, model, theta, corr, &block.indices, Want { info: true, meat: false });
    let delta = solve_symmetric(&n.info, &n.score).ok_or_else(|| MblError::Singular { block: block.name.clone() })?;
    let base_norm = n.score.norm();
    // under independence the quasi-likelihood is a proper objective, so the
    // step must not lower it; otherwise only a large score blow-up is refused
    let base_q = matches!(corr, WorkingCorrelation::Independence).then(|| quasi_likelihood(dataset, model, theta));

    let mut scale = 1.0;
    let mut candidate = theta.to_vec();
    for halving in 0..=MAX_HALVINGS {
        for (c, &idx) in block.indices.iter().enumerate() {
            candidate[idx] = theta[idx] + scale * delta[c];
        }
        let finite = candidate.iter().all(|v| v.is_finite());
        if finite {
            if halving == MAX_HALVINGS {
                break;
            }
            let acceptable = match base_q {
                Some(q0) => {
                    let q = quasi_likelihood(dataset, model, &candidate);
                    q.is_finite() && q >= q0 - Q_SLACK * q0.abs().max(1.0)
                }
                None => {
                    let score =
                        accumulate(dataset, model, &candidate, corr, &block.indices, Want { info: false, meat: false });
                    let norm = score.score.norm();
                    norm.is_finite() && norm <= SCORE_GROWTH_LIMIT * base_norm
                }
            };
            if acceptable {
                break;
            }
        } else if halving == MAX_HALVINGS {
            return Err(MblError::Diverged { trace: vec![] });
        }
        scale *= 0.5;
    }
    theta.copy_from_slice(&candidate);
    Ok(())
}

/// One sweep of blocked Fisher scoring. Blocks are updated in order; each
/// block sees the already-updated earlier blocks, and the working correlation
/// is re-estimated before every block update.
pub fn gee_step_blocked<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    structure: CorrStructure,
    scheme: &BlockingScheme,
) -> Result<StepOutcome> {
    scheme.validate(model.n_params())?;
    let mut current = theta.to_vec();
    let mut correlation = WorkingCorrelation::Independence;
    for block in &scheme.blocks {
        correlation = structure.estimate(dataset, model, &current)?;
        update_block(dataset, model, &mut current, &correlation, block)?;
    }
    Ok(StepOutcome { theta: current, correlation })
}

/// One conventional scoring step on all coefficients at once.
pub fn gee_step_full<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    structure: CorrStructure,
) -> Result<StepOutcome> {
    gee_step_blocked(dataset, model, theta, structure, &BlockingScheme::single(model.n_params()))
}

/// Sandwich covariance `M^{-1} B M^{-1}` with the empirical residual
/// outer product standing in for `Cov(Y_ij)`.
pub fn robust_variance<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    corr: &WorkingCorrelation,
) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..model.n_params()).collect();
    let n = accumulate(dataset, model, theta, corr, &all, Want { info: true, meat: true });
    let (m_inv, _ridged) =
        inverse_symmetric(&n.info).ok_or_else(|| MblError::Singular { block: "robust variance".into() })?;
    Ok(symmetrize(&m_inv * &n.meat * &m_inv))
}

/// Model-based covariance `M^{-1}`.
pub fn naive_variance<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    corr: &WorkingCorrelation,
) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..model.n_params()).collect();
    let n = accumulate(dataset, model, theta, corr, &all, Want { info: true, meat: false });
    inverse_symmetric(&n.info).map(|(inv, _)| inv).ok_or_else(|| MblError::Singular { block: "information".into() })
}
