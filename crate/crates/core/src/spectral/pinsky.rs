use crate::closed_form::Eigenpair;
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, DomainSpec};
use crate::numerics::quadrature::linspace;
use crate::numerics::summation::log_sum_exp;
use std::fmt;

const LEVELS: u32 = 8;
const NODES: usize = 4097;
const HALF_LINE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    ConsistentWithDivergence,
    Inconclusive,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::ConsistentWithDivergence => "consistent with divergence",
            Trend::Inconclusive => "inconclusive",
        })
    }
}

/// Nested boundary integrals on `[x0 − 2^k, x0]` and `[x0, x0 + 2^k]`.
#[derive(Debug, Clone)]
pub struct PinskyReport {
    pub x0: f64,
    pub radii: Vec<f64>,
    /// Non-finite values are reported as `+∞`.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub left_trend: Trend,
    pub right_trend: Trend,
}

fn trend(v: &[f64]) -> Trend {
    let monotone = v.windows(2).all(|w| w[1] >= w[0]);
    let n = v.len();
    let growing = v[n - 1].is_infinite() || v[n - 1] >= v[n - 2] * (1.0 + 1e-3);
    if monotone && growing {
        Trend::ConsistentWithDivergence
    } else {
        Trend::Inconclusive
    }
}

/// Log of the cumulative trapezoid integral of `exp(logf)` from the first node.
fn log_cumulative(x: &[f64], logf: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; x.len()];
    for i in 1..x.len() {
        let dx = (x[i] - x[i - 1]).abs();
        let piece = log_sum_exp(&[logf[i - 1], logf[i]]) + (0.5 * dx).ln();
        out[i] = log_sum_exp(&[out[i - 1], piece]);
    }
    out
}

/// `∫_{x0}^{end} φ^{-2} e^{−S} ∫_{x0}^{x} φ² σ^{-2} e^{S} dy dx` with
/// `S(x) = ∫_{x0}^x 2b/σ²`; nodes run from `x0` to `end`.
fn nested_integral(model: &DiffusionModel, pair: &Eigenpair, x: &[f64]) -> f64 {
    let n = x.len();
    let mut s2 = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut lphi = vec![0.0; n];
    for i in 0..n {
        let mut sig = [0.0];
        model.diffusion(&[x[i]], &mut sig);
        s2[i] = sig[0] * sig[0];
        let mut d = [0.0];
        model.drift(&[x[i]], &mut d);
        b[i] = d[0];
        lphi[i] = pair.log_phi(&[x[i]]);
    }
    let mut s = vec![0.0; n];
    for i in 1..n {
        let dx = x[i] - x[i - 1];
        s[i] = s[i - 1] + 0.5 * dx * (2.0 * b[i - 1] / s2[i - 1] + 2.0 * b[i] / s2[i]);
    }
    let inner_log: Vec<f64> = (0..n).map(|i| 2.0 * lphi[i] - s2[i].ln() + s[i]).collect();
    let inner = log_cumulative(x, &inner_log);
    let outer_log: Vec<f64> = (0..n).map(|i| inner[i] - 2.0 * lphi[i] - s[i]).collect();
    let v = log_cumulative(x, &outer_log)[n - 1].exp();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Heuristic growth report for the two boundary integrals; never fails on
/// divergence, only on invalid input.
pub fn pinsky_diagnostic(model: &DiffusionModel, pair: &Eigenpair, x0: f64) -> Result<PinskyReport> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("Pinsky diagnostic is one-dimensional".into()));
    }
    if !model.domain().contains(&[x0]) {
        return Err(Error::Config(format!("x0 = {x0} lies outside the domain")));
    }
    let floor = match model.domain() {
        DomainSpec::HalfLine => Some(HALF_LINE_FLOOR),
        DomainSpec::Box { lower, .. } => Some(lower[0]),
        DomainSpec::FullSpace { .. } => None,
    };
    let ceil = match model.domain() {
        DomainSpec::Box { upper, .. } => Some(upper[0]),
        _ => None,
    };
    let mut radii = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for k in 1..=LEVELS {
        let r = 2f64.powi(k as i32);
        radii.push(r);
        let lo = floor.map_or(x0 - r, |f| (x0 - r).max(f));
        let hi = ceil.map_or(x0 + r, |c| (x0 + r).min(c));
        left.push(if lo < x0 {
            nested_integral(model, pair, &linspace(x0, lo, NODES))
        } else {
            0.0
        });
        right.push(if hi > x0 {
            nested_integral(model, pair, &linspace(x0, hi, NODES))
        } else {
            0.0
        });
    }
    Ok(PinskyReport {
        x0,
        left_trend: trend(&left),
        right_trend: trend(&right),
        radii,
        left,
        right,
    })
}
