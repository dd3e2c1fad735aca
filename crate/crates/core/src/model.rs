//! Latent Beta-curve trajectory model.
//!
//! The latent intensity at standardized time `t` is the unnormalized Beta kernel
//! `MA(t) = t^(e^a - 1) (1 - t)^(e^b - 1)`, where `a` and `b` are polynomials in
//! the episode duration `d`. Each binary response `k` is linked to the latent
//! intensity through a polynomial logit:
//! `logit pi_k = c_0k + c_1k MA + ... + c_mk MA^mk`.
//!
//! Coefficients are stored flat in the order
//! `(a_0..a_ma, b_0..b_mb, c_01..c_m1 1, ..., c_0K..c_mK K)`.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MblError, Result};

/// Standardized times are clamped to `[TIME_EPS, 1 - TIME_EPS]` before the
/// latent curve or its log-derivatives are evaluated.
pub const TIME_EPS: f64 = 1e-6;

const LOGIT_EPS: f64 = 1e-12;

/// Numerically stable logistic function.
#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Log-odds, with the argument saturated to `[1e-12, 1 - 1e-12]`.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (p / (1.0 - p)).ln()
}

/// Evaluates `c_0 + c_1 x + ... + c_m x^m` by Horner's rule.
#[inline]
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[inline]
pub(crate) fn clamp_time(t: f64) -> f64 {
    t.clamp(TIME_EPS, 1.0 - TIME_EPS)
}

/// Polynomial orders that define one member of the model family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Order `m_a` of the duration polynomial for `a`.
    pub order_a: usize,
    /// Order `m_b` of the duration polynomial for `b`.
    pub order_b: usize,
    /// Link orders `m_1..m_K`, one per response.
    pub order_link: Vec<usize>,
}

/// A named, contiguous range of the flat coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, start: usize, len: usize) -> Self {
        Self { name: name.into(), start, len }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

impl ModelSpec {
    pub fn new(order_a: usize, order_b: usize, order_link: Vec<usize>) -> Result<Self> {
        let spec = Self { order_a, order_b, order_link };
        spec.validate()?;
        Ok(spec)
    }

    /// All orders equal to `order`, for `n_responses` responses.
    pub fn uniform(n_responses: usize, order: usize) -> Self {
        Self { order_a: order, order_b: order, order_link: vec![order; n_responses] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order_link.is_empty() {
            return Err(MblError::InvalidInput("model needs at least one response".into()));
        }
        Ok(())
    }

    pub fn n_responses(&self) -> usize {
        self.order_link.len()
    }

    /// Mean-parameter count `p`.
    pub fn n_params(&self) -> usize {
        (self.order_a + 1) + (self.order_b + 1) + self.order_link.iter().map(|m| m + 1).sum::<usize>()
    }

    /// Blocks `a`, `b`, `c1`..`cK` in flat order.
    pub fn block_layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::with_capacity(2 + self.n_responses());
        blocks.push(ParamBlock::new("a", 0, self.order_a + 1));
        blocks.push(ParamBlock::new("b", self.order_a + 1, self.order_b + 1));
        let mut start = self.order_a + self.order_b + 2;
        for (k, &m) in self.order_link.iter().enumerate() {
            blocks.push(ParamBlock::new(format!("c{}", k + 1), start, m + 1));
            start += m + 1;
        }
        blocks
    }

    /// Short label listing the orders that differ from `base`, grouped by value,
    /// e.g. `m4=m6=ma=1`. Returns `Full` when nothing differs.
    pub fn label_relative_to(&self, base: &ModelSpec) -> String {
        let mut names: Vec<(usize, String)> = Vec::new();
        for (k, (&m, &m0)) in self.order_link.iter().zip(&base.order_link).enumerate() {
            if m != m0 {
                names.push((m, format!("m{}", k + 1)));
            }
        }
        if self.order_a != base.order_a {
            names.push((self.order_a, "ma".into()));
        }
        if self.order_b != base.order_b {
            names.push((self.order_b, "mb".into()));
        }
        if names.is_empty() {
            return "Full".into();
        }
        let mut values: Vec<usize> = names.iter().map(|(v, _)| *v).collect();
        values.sort_unstable_by(|x, y| y.cmp(x));
        values.dedup();
        values
            .iter()
            .map(|v| {
                let group: Vec<&str> = names.iter().filter(|(m, _)| m == v).map(|(_, n)| n.as_str()).collect();
                format!("{}={}", group.join("="), v)
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Coefficients of a latent trajectory model, grouped by role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub link: Vec<Vec<f64>>,
}

impl ParamVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            a: vec![0.0; spec.order_a + 1],
            b: vec![0.0; spec.order_b + 1],
            link: spec.order_link.iter().map(|&m| vec![0.0; m + 1]).collect(),
        }
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.n_params() {
            return Err(MblError::InvalidInput(format!(
                "expected {} coefficients, got {}",
                spec.n_params(),
                flat.len()
            )));
        }
        let blocks = spec.block_layout();
        Ok(Self {
            a: flat[blocks[0].range()].to_vec(),
            b: flat[blocks[1].range()].to_vec(),
            link: blocks[2..].iter().map(|blk| flat[blk.range()].to_vec()).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.a.len() + self.b.len() + self.link.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.b);
        for c in &self.link {
            out.extend_from_slice(c);
        }
        out
    }

    /// The orders implied by the coefficient lengths.
    pub fn spec(&self) -> Result<ModelSpec> {
        if self.a.is_empty() || self.b.is_empty() || self.link.iter().any(Vec::is_empty) {
            return Err(MblError::InvalidInput("every coefficient group needs a constant term".into()));
        }
        ModelSpec::new(self.a.len() - 1, self.b.len() - 1, self.link.iter().map(|c| c.len() - 1).collect())
    }

    pub fn is_consistent_with(&self, spec: &ModelSpec) -> bool {
        self.a.len() == spec.order_a + 1
            && self.b.len() == spec.order_b + 1
            && self.link.len() == spec.n_responses()
            && self.link.iter().zip(&spec.order_link).all(|(c, &m)| c.len() == m + 1)
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.a.iter().chain(&self.b).chain(self.link.iter().flatten()).all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(MblError::InvalidInput("non-finite coefficient".into()))
        }
    }
}

/// Log-exponents of the Beta kernel: `r = e^a`, `s = e^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaCurveParams {
    pub a: f64,
    pub b: f64,
}

impl MaCurveParams {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn r(&self) -> f64 {
        self.a.exp()
    }

    pub fn s(&self) -> f64 {
        self.b.exp()
    }

    /// Location of the kernel maximum when both exponents exceed one.
    pub fn mode(&self) -> Option<f64> {
        let (r, s) = (self.r(), self.s());
        (r > 1.0 && s > 1.0).then(|| (r - 1.0) / (r + s - 2.0))
    }
}

/// Duration-dependent curve parameters `(a, b)` at duration `d`.
pub fn eval_ab(d: f64, params: &ParamVector) -> Result<(f64, f64)> {
    if !d.is_finite() {
        return Err(MblError::InvalidInput(format!("duration {d} is not finite")));
    }
    params.check_finite()?;
    Ok((horner(&params.a, d), horner(&params.b, d)))
}

/// Latent intensity at standardized time `t`.
pub fn eval_ma(t: f64, ma: MaCurveParams) -> Result<f64> {
    if !(t.is_finite() && ma.a.is_finite() && ma.b.is_finite()) {
        return Err(MblError::InvalidInput("non-finite time or curve parameter".into()));
    }
    Ok(ma_kernel(clamp_time(t), ma.r(), ma.s()))
}

#[inline]
pub(crate) fn ma_kernel(tc: f64, r: f64, s: f64) -> f64 {
    tc.powf(r - 1.0) * (1.0 - tc).powf(s - 1.0)
}

fn check_point(t: f64, d: f64, params: &ParamVector) -> Result<()> {
    if !t.is_finite() || !d.is_finite() {
        return Err(MblError::InvalidInput("non-finite time or duration".into()));
    }
    params.check_finite()
}

/// Probability of response `k` (zero-based) at `(t, d)`.
pub fn eval_pi(t: f64, d: f64, params: &ParamVector, k: usize) -> Result<f64> {
    check_point(t, d, params)?;
    let coeffs =
        params.link.get(k).ok_or_else(|| MblError::InvalidInput(format!("response index {k} out of range")))?;
    let (a, b) = (horner(&params.a, d), horner(&params.b, d));
    let ma = ma_kernel(clamp_time(t), a.exp(), b.exp());
    Ok(expit(horner(coeffs, ma)))
}

/// All `K` response probabilities at `(t, d)`.
pub fn eval_mean_vector(t: f64, d: f64, params: &ParamVector) -> Result<Vec<f64>> {
    check_point(t, d, params)?;
    let spec = params.spec()?;
    let mut out = vec![0.0; spec.n_responses()];
    latent_mean(&spec, &params.to_flat(), t, d, &mut out);
    Ok(out)
}

/// Analytic `K x p` Jacobian of the mean vector with respect to the flat coefficients.
pub fn jacobian_mean(t: f64, d: f64, params: &ParamVector) -> Result<DMatrix<f64>> {
    check_point(t, d, params)?;
    let spec = params.spec()?;
    let mut mean = vec![0.0; spec.n_responses()];
    let mut jac = DMatrix::zeros(spec.n_responses(), spec.n_params());
    latent_mean_jacobian(&spec, &params.to_flat(), t, d, &mut mean, &mut jac);
    Ok(jac)
}

pub(crate) fn latent_mean(spec: &ModelSpec, theta: &[f64], t: f64, d: f64, out: &mut [f64]) {
    let na = spec.order_a + 1;
    let nb = spec.order_b + 1;
    let a = horner(&theta[..na], d);
    let b = horner(&theta[na..na + nb], d);
    let ma = ma_kernel(clamp_time(t), a.exp(), b.exp());
    let mut off = na + nb;
    for (k, &m) in spec.order_link.iter().enumerate() {
        out[k] = expit(horner(&theta[off..off + m + 1], ma));
        off += m + 1;
    }
}

pub(crate) fn latent_mean_jacobian(
    spec: &ModelSpec,
    theta: &[f64],
    t: f64,
    d: f64,
    mean: &mut [f64],
    jac: &mut DMatrix<f64>,
) {
    let na = spec.order_a + 1;
    let nb = spec.order_b + 1;
    let tc = clamp_time(t);
    let (r, s) = (horner(&theta[..na], d).exp(), horner(&theta[na..na + nb], d).exp());
    let ma = ma_kernel(tc, r, s);
    // dMA/da and dMA/db before the d^j chain factor
    let dma_da = ma * r * tc.ln();
    let dma_db = ma * s * (1.0 - tc).ln();

    jac.fill(0.0);
    let mut off = na + nb;
    for (k, &m) in spec.order_link.iter().enumerate() {
        let coeffs = &theta[off..off + m + 1];
        let pi = expit(horner(coeffs, ma));
        mean[k] = pi;
        let w = pi * (1.0 - pi);

        let mut pow = 1.0;
        for j in 0..=m {
            jac[(k, off + j)] = w * pow;
            pow *= ma;
        }

        // eta'(MA) = sum_j j c_j MA^(j-1)
        let mut deta = 0.0;
        let mut pow = 1.0;
        for j in 1..=m {
            deta += j as f64 * coeffs[j] * pow;
            pow *= ma;
        }
        let ga = w * deta * dma_da;
        let gb = w * deta * dma_db;
        let mut dj = 1.0;
        for j in 0..na {
            jac[(k, j)] = ga * dj;
            dj *= d;
        }
        let mut dj = 1.0;
        for j in 0..nb {
            jac[(k, na + j)] = gb * dj;
            dj *= d;
        }
        off += m + 1;
    }
}

/// JSON document pairing orders with coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub orders: OrdersDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientsDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdersDoc {
    pub a: usize,
    pub b: usize,
    pub link: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsDoc {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub link: Vec<Vec<f64>>,
}

impl ModelDocument {
    pub fn new(spec: &ModelSpec, params: Option<&ParamVector>) -> Self {
        Self {
            orders: OrdersDoc { a: spec.order_a, b: spec.order_b, link: spec.order_link.clone() },
            coefficients: params.map(|p| CoefficientsDoc { a: p.a.clone(), b: p.b.clone(), link: p.link.clone() }),
        }
    }

    /// Validated spec and, when present, coefficients consistent with it.
    pub fn into_parts(self) -> Result<(ModelSpec, Option<ParamVector>)> {
        let spec = ModelSpec::new(self.orders.a, self.orders.b, self.orders.link)?;
        let params = match self.coefficients {
            None => None,
            Some(c) => {
                let p = ParamVector { a: c.a, b: c.b, link: c.link };
                if !p.is_consistent_with(&spec) {
                    return Err(MblError::InvalidInput("coefficient lengths do not match orders".into()));
                }
                Some(p)
            }
        };
        Ok((spec, params))
    }
}
