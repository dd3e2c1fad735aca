//! Hosmer-Lemeshow statistics and predicted-versus-empirical check curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::MblDataset;
use crate::family::MeanModel;

/// 95th percentile of chi-square with 8 degrees of freedom.
pub const CHI2_8_95: f64 = 15.51;
/// 95th percentile of chi-square with 64 degrees of freedom.
pub const CHI2_64_95: f64 = 83.68;
/// Eight times the 95th percentile of chi-square with 8 degrees of freedom.
pub const SCALED_8CHI2_8_95: f64 = 124.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningRule {
    /// Ten fixed-width probability bins `(0.1(l-1), 0.1 l]`, the first closed at 0.
    #[default]
    Fixed,
    /// Ten groups of (nearly) equal size by rank of the fitted probability.
    Decile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlThresholds {
    pub chi2_8_95: f64,
    pub chi2_64_95: f64,
    pub scaled_8chi2_8_95: f64,
}

impl Default for HlThresholds {
    fn default() -> Self {
        Self { chi2_8_95: CHI2_8_95, chi2_64_95: CHI2_64_95, scaled_8chi2_8_95: SCALED_8CHI2_8_95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlBin {
    pub lower: f64,
    pub upper: f64,
    pub observed: f64,
    pub expected: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHl {
    pub statistic: f64,
    pub bins: Vec<HlBin>,
    /// Fewer than two nonempty bins; the statistic is reported as 0.
    pub degenerate: bool,
    pub below_chi2_8: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlReport {
    pub rule: BinningRule,
    pub per_response: Vec<ResponseHl>,
    pub total: f64,
    pub degrees_of_freedom: usize,
    pub thresholds: HlThresholds,
    /// Total below the smaller aggregate reference point.
    pub total_passes: bool,
}

/// Fixed-width bin index `l - 1` for a probability, matching `(0.1(l-1), 0.1 l]`.
pub fn fixed_bin(p: f64) -> usize {
    let mut l = ((p * 10.0).ceil() as isize).clamp(1, 10) as usize;
    while l > 1 && p <= 0.1 * (l - 1) as f64 {
        l -= 1;
    }
    while l < 10 && p > 0.1 * l as f64 {
        l += 1;
    }
    l - 1
}

/// Statistic for one response from its fitted probabilities and outcomes.
pub fn hl_statistic(probs: &[f64], outcomes: &[u8], rule: BinningRule) -> ResponseHl {
    let mut bins: Vec<HlBin> = (0..10)
        .map(|l| HlBin { lower: 0.1 * l as f64, upper: 0.1 * (l + 1) as f64, observed: 0.0, expected: 0.0, count: 0 })
        .collect();
    match rule {
        BinningRule::Fixed => {
            for (&p, &y) in probs.iter().zip(outcomes) {
                let b = &mut bins[fixed_bin(p)];
                b.observed += y as f64;
                b.expected += p;
                b.count += 1;
            }
        }
        BinningRule::Decile => {
            let n = probs.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| probs[i].total_cmp(&probs[j]).then(i.cmp(&j)));
            for b in bins.iter_mut() {
                b.lower = f64::INFINITY;
                b.upper = f64::NEG_INFINITY;
            }
            for (rank, &i) in order.iter().enumerate() {
                let b = &mut bins[rank * 10 / n.max(1)];
                b.observed += outcomes[i] as f64;
                b.expected += probs[i];
                b.count += 1;
                b.lower = b.lower.min(probs[i]);
                b.upper = b.upper.max(probs[i]);
            }
        }
    }
    let bins: Vec<HlBin> = bins.into_iter().filter(|b| b.count > 0 && b.expected > 0.0).collect();
    let degenerate = bins.len() < 2;
    let statistic =
        if degenerate { 0.0 } else { bins.iter().map(|b| (b.observed - b.expected).powi(2) / b.expected).sum() };
    ResponseHl { statistic, bins, degenerate, below_chi2_8: statistic < CHI2_8_95 }
}

/// Hosmer-Lemeshow statistic for every response at the given coefficients.
pub fn hosmer_lemeshow<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    rule: BinningRule,
) -> HlReport {
    let k = model.n_responses();
    let n = dataset.n_obs();
    let mut probs = vec![Vec::with_capacity(n); k];
    let mut ys = vec![Vec::with_capacity(n); k];
    let mut pi = vec![0.0; k];
    for (d, t, y) in dataset.observations() {
        model.mean(theta, t, d, &mut pi);
        for r in 0..k {
            probs[r].push(pi[r]);
            ys[r].push(y[r]);
        }
    }
    let per_response: Vec<ResponseHl> = (0..k).map(|r| hl_statistic(&probs[r], &ys[r], rule)).collect();
    let total = per_response.iter().map(|r| r.statistic).sum();
    HlReport {
        rule,
        per_response,
        total,
        degrees_of_freedom: 8,
        thresholds: HlThresholds::default(),
        total_passes: total < CHI2_64_95,
    }
}

impl HlReport {
    /// Two-row table of `X_k^2` values, four responses per row.
    pub fn to_text(&self) -> String {
        let mut out = String::from("Hosmer-Lemeshow statistics\n");
        for chunk in self.per_response.chunks(4).enumerate() {
            let (row, items) = chunk;
            let start = row * 4 + 1;
            let _ = write!(out, "{:<8}", "k");
            for i in 0..items.len() {
                let _ = write!(out, "{:>12}", start + i);
            }
            let _ = write!(out, "\n{:<8}", "X_k^2");
            for r in items {
                let _ = write!(out, "{:>12}", format_stat(r.statistic));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "total X^2 = {}", format_stat(self.total));
        let _ = writeln!(
            out,
            "reference: chi2(8) 95% = {:.2}; aggregate band [{:.2}, {:.2}]; total {}",
            self.thresholds.chi2_8_95,
            self.thresholds.chi2_64_95,
            self.thresholds.scaled_8chi2_8_95,
            if self.total_passes { "below both" } else { "NOT below the smaller" }
        );
        for (k, r) in self.per_response.iter().enumerate() {
            if r.degenerate {
                let _ = writeln!(out, "response {} is degenerate (fewer than 2 nonempty bins)", k + 1);
            } else if !r.below_chi2_8 {
                let _ = writeln!(out, "response {} exceeds chi2(8) 95%", k + 1);
            }
        }
        out
    }
}

fn format_stat(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// Standard check-curve time grid `0.05 j`, `j = 1..19`.
pub fn check_grid() -> Vec<f64> {
    (1..=19).map(|j| j as f64 * 0.05).collect()
}

/// Durations and duration half-widths used by default for check curves.
pub const DEFAULT_CHECK_WINDOWS: [(f64, f64); 2] = [(2.0, 1.0), (8.0, 3.0)];
pub const DEFAULT_TIME_HALFWIDTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPoint {
    pub t: f64,
    pub predicted: f64,
    /// `None` when the window holds no observations.
    pub empirical: Option<f64>,
    pub n_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCurve {
    /// Zero-based response index.
    pub response: usize,
    pub duration: f64,
    pub d_halfwidth: f64,
    pub t_halfwidth: f64,
    pub points: Vec<CheckPoint>,
}

impl CheckCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,predicted,empirical,n_window\n");
        for p in &self.points {
            let emp = p.empirical.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", p.t, p.predicted, emp, p.n_window);
        }
        out
    }

    /// Mean absolute predicted-minus-empirical gap over nonempty windows.
    pub fn mean_abs_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = self.points.iter().filter_map(|p| p.empirical.map(|e| (e - p.predicted).abs())).collect();
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }
}

/// Predicted probabilities at `(t_j, d)` with empirical proportions from the
/// observations with `|t - t_j| <= t_halfwidth` and `|duration - d| <= d_halfwidth`.
pub fn check_curves<M: MeanModel + ?Sized>(
    dataset: &MblDataset,
    model: &M,
    theta: &[f64],
    d: f64,
    d_halfwidth: f64,
    t_halfwidth: f64,
) -> Vec<CheckCurve> {
    let k = model.n_responses();
    let grid = check_grid();
    let mut curves: Vec<CheckCurve> = (0..k)
        .map(|response| CheckCurve { response, duration: d, d_halfwidth, t_halfwidth, points: Vec::new() })
        .collect();
    let mut pi = vec![0.0; k];
    for &t in &grid {
        model.mean(theta, t, d, &mut pi);
        let mut counts = vec![0usize; k];
        let mut n = 0usize;
        for (dur, tij, y) in dataset.observations() {
            if (dur - d).abs() <= d_halfwidth && tij >= t - t_halfwidth && tij <= t + t_halfwidth {
                n += 1;
                for (c, &v) in counts.iter_mut().zip(y) {
                    *c += v as usize;
                }
            }
        }
        for (r, curve) in curves.iter_mut().enumerate() {
            curve.points.push(CheckPoint {
                t,
                predicted: pi[r],
                empirical: (n > 0).then(|| counts[r] as f64 / n as f64),
                n_window: n,
            });
        }
    }
    curves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use crate::model::ModelSpec;

    #[test]
    fn fixed_bin_edges() {
        assert_eq!(fixed_bin(0.0), 0);
        assert_eq!(fixed_bin(0.1), 0);
        assert_eq!(fixed_bin(0.1000001), 1);
        assert_eq!(fixed_bin(0.3), 2);
        assert_eq!(fixed_bin(0.7), 6);
        assert_eq!(fixed_bin(1.0), 9);
        for l in 1..10 {
            let edge = 0.1 * l as f64;
            assert_eq!(fixed_bin(edge), l - 1, "edge {edge}");
        }
    }

    #[test]
    fn perfect_binwise_rates_give_zero() {
        // two bins, each with expected equal to observed
        let probs = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let ys = [1, 0, 0, 0, 1, 1, 1, 0];
        let r = hl_statistic(&probs, &ys, BinningRule::Fixed);
        assert_eq!(r.bins.len(), 2);
        assert_eq!(r.statistic, 0.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let r = hl_statistic(&[0.55, 0.56], &[1, 0], BinningRule::Fixed);
        assert!(r.degenerate);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn decile_groups_are_balanced() {
        let probs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let ys: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let r = hl_statistic(&probs, &ys, BinningRule::Decile);
        assert_eq!(r.bins.len(), 10);
        assert!(r.bins.iter().all(|b| b.count == 10));
    }

    #[test]
    fn empty_window_is_missing() {
        let ds = MblDataset::new(
            1,
            vec![Subject { duration: 2.0, times: vec![0.5, 0.52], outcomes: vec![vec![1], vec![1]] }],
        )
        .unwrap();
        let spec = ModelSpec::uniform(1, 0);
        let curves = check_curves(&ds, &spec, &[0.0, 0.0, 0.0], 2.0, 1.0, 0.05);
        assert_eq!(curves.len(), 1);
        let pts = &curves[0].points;
        assert_eq!(pts.len(), 19);
        assert_eq!(pts[9].empirical, Some(1.0));
        assert_eq!(pts[9].n_window, 2);
        assert_eq!(pts[0].empirical, None);
        assert!(pts.iter().all(|p| p.predicted == 0.5));
        assert!(curves[0].to_csv().contains("\n0.05,0.5,,0\n"));
    }
}
