//! QIC_u and greedy backward selection of polynomial orders.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::error::{MblError, Result};
use crate::family::{MeanFamily, MeanModel};
use crate::gee::{fit, init_params, FitConfig, FitResult, InitConfig, SchemePreset};
use crate::model::{ModelSpec, ParamVector};

/// Bernoulli quasi-likelihood under independence, summed over every
/// subject, time point and response.
pub fn quasi_likelihood<M: MeanModel + ?Sized>(dataset: &MblDataset, model: &M, theta: &[f64]) -> f64 {
    let mut pi = vec![0.0; model.n_responses()];
    let mut q = 0.0;
    for (d, t, y) in dataset.observations() {
        model.mean(theta, t, d, &mut pi);
        for (&p, &yk) in pi.iter().zip(y) {
            let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            q += if yk == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    q
}

/// `-2 Q + 2 p` at the given coefficients.
pub fn qic_u_at<M: MeanModel + ?Sized>(dataset: &MblDataset, model: &M, theta: &[f64]) -> f64 {
    -2.0 * quasi_likelihood(dataset, model, theta) + 2.0 * model.n_params() as f64
}

/// QIC_u of a converged fit.
pub fn qic_u<M: MeanModel + ?Sized>(dataset: &MblDataset, model: &M, fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(MblError::NotConverged);
    }
    Ok(qic_u_at(dataset, model, &fit.coefficients))
}

/// Which order a candidate lowers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSlot {
    A,
    B,
    Link(usize),
}

impl OrderSlot {
    fn lower(self, spec: &ModelSpec) -> Option<ModelSpec> {
        let mut s = spec.clone();
        let order = match self {
            OrderSlot::A => &mut s.order_a,
            OrderSlot::B => &mut s.order_b,
            OrderSlot::Link(k) => &mut s.order_link[k],
        };
        if *order == 0 {
            return None;
        }
        *order -= 1;
        Some(s)
    }

    /// Drops the highest coefficient of the lowered group.
    fn truncate(self, params: &ParamVector) -> ParamVector {
        let mut p = params.clone();
        match self {
            OrderSlot::A => p.a.pop(),
            OrderSlot::B => p.b.pop(),
            OrderSlot::Link(k) => p.link[k].pop(),
        };
        p
    }
}

/// Candidate order for one round; earlier entries win QIC_u ties
/// (highest-index link first, `a` last).
fn candidate_slots(k: usize) -> Vec<OrderSlot> {
    let mut slots: Vec<OrderSlot> = (0..k).rev().map(OrderSlot::Link).collect();
    slots.push(OrderSlot::B);
    slots.push(OrderSlot::A);
    slots
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub fit: FitConfig,
    pub preset: SchemePreset,
    pub init: InitConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { fit: FitConfig::default(), preset: SchemePreset::BIII, init: InitConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub round: usize,
    pub label: String,
    pub spec: ModelSpec,
    /// `+inf` for fits that diverged or did not converge.
    pub qic_u: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub final_spec: ModelSpec,
    pub final_coefficients: Vec<f64>,
}

impl SelectionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,label,qic_u,accepted\n");
        for s in &self.steps {
            let _ = writeln!(out, "{},\"{}\",{:.2},{}", s.round, s.label, s.qic_u, s.accepted);
        }
        out
    }

    /// QIC_u values along the accepted path, in order.
    pub fn accepted_path(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.qic_u).collect()
    }
}

fn fit_spec(
    dataset: &MblDataset,
    spec: &ModelSpec,
    start: &ParamVector,
    config: &SelectionConfig,
) -> Option<(f64, FitResult)> {
    let family = MeanFamily::Latent(spec.clone());
    let fit_config = config.fit.clone().with_scheme(config.preset.scheme(&family));
    let result = fit(dataset, spec, &start.to_flat(), &fit_config).ok()?;
    let q = qic_u(dataset, spec, &result).ok()?;
    q.is_finite().then_some((q, result))
}

/// Greedy backward search starting from `full_spec`.
///
/// Each round fits every model that lowers exactly one order of the incumbent
/// by one, warm-started from the incumbent's estimates, and moves to the best
/// candidate if its QIC_u does not exceed the incumbent's.
pub fn backward_select(
    dataset: &MblDataset,
    full_spec: &ModelSpec,
    config: &SelectionConfig,
) -> Result<SelectionTrace> {
    let start = init_params(dataset, full_spec, &config.init)?;
    let (mut best_qic, best_fit) = fit_spec(dataset, full_spec, &start, config)
        .ok_or_else(|| MblError::Config("the starting model could not be fitted".into()))?;
    let mut incumbent = full_spec.clone();
    let mut incumbent_params = best_fit.params(full_spec)?;
    let mut steps = vec![SelectionStep {
        round: 0,
        label: full_spec.label_relative_to(full_spec),
        spec: full_spec.clone(),
        qic_u: best_qic,
        accepted: true,
    }];

    for round in 1.. {
        let candidates: Vec<(OrderSlot, ModelSpec)> = candidate_slots(incumbent.n_responses())
            .into_iter()
            .filter_map(|slot| slot.lower(&incumbent).map(|s| (slot, s)))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let results: Vec<Option<(f64, FitResult)>> = candidates
            .par_iter()
            .map(|(slot, spec)| fit_spec(dataset, spec, &slot.truncate(&incumbent_params), config))
            .collect();

        let mut winner: Option<usize> = None;
        for (i, r) in results.iter().enumerate() {
            if let Some((q, _)) = r {
                if winner.is_none_or(|w| *q < results[w].as_ref().expect("winner has a fit").0) {
                    winner = Some(i);
                }
            }
        }
        let accept = winner.filter(|&w| results[w].as_ref().expect("winner has a fit").0 <= best_qic);

        for (i, ((_, spec), r)) in candidates.iter().zip(&results).enumerate() {
            steps.push(SelectionStep {
                round,
                label: spec.label_relative_to(full_spec),
                spec: spec.clone(),
                qic_u: r.as_ref().map_or(f64::INFINITY, |(q, _)| *q),
                accepted: accept == Some(i),
            });
        }

        match accept {
            Some(w) => {
                let (q, f) = results[w].as_ref().expect("accepted candidate has a fit");
                best_qic = *q;
                incumbent = candidates[w].1.clone();
                incumbent_params = f.params(&incumbent)?;
            }
            None => break,
        }
    }

    Ok(SelectionTrace { steps, final_spec: incumbent, final_coefficients: incumbent_params.to_flat() })
}
