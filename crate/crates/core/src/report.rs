//! Serializable fit reports and their plain-text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::error::{MblError, Result};
use crate::family::{MeanFamily, MeanModel};
use crate::gee::{CorrStructure, FitResult, WorkingCorrelation};
use crate::selection::qic_u;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub structure: CorrStructure,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// Everything needed to reuse a fit: the model, estimates grouped by block,
/// sandwich covariance, working correlation, iteration trace and QIC_u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: MeanFamily,
    pub blocks: Vec<BlockReport>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub robust_cov: Vec<Vec<f64>>,
    pub correlation: CorrelationReport,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub p: usize,
    pub qic_u: Option<f64>,
}

impl FitReport {
    pub fn new(model: &MeanFamily, fit: &FitResult, dataset: &MblDataset) -> Self {
        let se = fit.std_errors();
        let labels = model.param_labels();
        let blocks = model
            .blocks()
            .iter()
            .map(|b| BlockReport {
                name: b.name.clone(),
                labels: labels[b.range()].to_vec(),
                estimates: fit.coefficients[b.range()].to_vec(),
                std_errors: se[b.range()].to_vec(),
            })
            .collect();
        let k = model.n_responses();
        let correlation = CorrelationReport {
            structure: fit.correlation.structure(),
            alpha: fit.alpha(),
            matrix: match &fit.correlation {
                WorkingCorrelation::Unstructured(_) => {
                    let r = fit.correlation.matrix(k);
                    Some((0..k).map(|i| r.row(i).iter().copied().collect()).collect())
                }
                _ => None,
            },
        };
        Self {
            model: model.clone(),
            blocks,
            coefficients: fit.coefficients.clone(),
            std_errors: se,
            robust_cov: (0..fit.p).map(|i| fit.robust_cov.row(i).iter().copied().collect()).collect(),
            correlation,
            iterations: fit.iterations,
            converged: fit.converged,
            trace: fit.trace.clone(),
            p: fit.p,
            qic_u: qic_u(dataset, model, fit).ok(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: FitReport = serde_json::from_str(text)?;
        if report.coefficients.len() != report.model.n_params() {
            return Err(MblError::InvalidInput("report coefficients do not match its model".into()));
        }
        Ok(report)
    }

    /// Estimates with standard errors in parentheses, one row per block and
    /// one column per polynomial power.
    pub fn to_text(&self) -> String {
        let width = self.blocks.iter().map(|b| b.estimates.len()).max().unwrap_or(1);
        let heads = ["Constant", "Linear", "Quadratic", "Cubic"];
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "Parameter");
        for j in 0..width {
            let h = heads.get(j).map_or_else(|| format!("Power {j}"), |h| h.to_string());
            let _ = write!(out, "{h:>22}");
        }
        out.push('\n');
        for b in &self.blocks {
            let _ = write!(out, "{:<10}", b.name);
            for j in 0..width {
                let cell = match (b.estimates.get(j), b.std_errors.get(j)) {
                    (Some(e), Some(s)) => format!("{e:.4} ({s:.4})"),
                    _ => "-".to_string(),
                };
                let _ = write!(out, "{cell:>22}");
            }
            out.push('\n');
        }
        out.push('\n');
        if let Some(a) = self.correlation.alpha {
            let _ = writeln!(out, "alpha = {a:.4}");
        }
        if let Some(q) = self.qic_u {
            let _ = writeln!(out, "QIC_u = {q:.2}");
        }
        let _ = writeln!(
            out,
            "{} after {} iterations (final relative difference {:.3e})",
            if self.converged { "converged" } else { "NOT converged" },
            self.iterations,
            self.trace.last().copied().unwrap_or(f64::NAN)
        );
        out
    }
}
