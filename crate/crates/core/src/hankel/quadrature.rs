use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Neglected tail mass `e^{-decay·T}` of the truncated rule.
pub const DEFAULT_TAIL_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    TruncatedTrapezoid,
    GaussLaguerre,
}

impl fmt::Display for QuadratureScheme {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            QuadratureScheme::TruncatedTrapezoid => "truncated-trapezoid",
            QuadratureScheme::GaussLaguerre => "gauss-laguerre",
        })
    }
}

impl FromStr for QuadratureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" | "truncated-trapezoid" => Ok(Self::TruncatedTrapezoid),
            "laguerre" | "gauss-laguerre" => Ok(Self::GaussLaguerre),
            other => Err(Error::Parse(format!("unknown quadrature scheme '{other}'"))),
        }
    }
}

/// Nodes and weights approximating `∫₀^∞ f(t) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scheme: QuadratureScheme,
    horizon: Option<f64>,
}

impl TimeQuadrature {
    /// Uniform nodes on `[0, horizon]` with trapezoid weights.
    pub fn trapezoid(n: usize, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation(format!("quadrature needs at least 2 nodes, got {n}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        let h = horizon / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { horizon } else { i as f64 * h })
            .collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Ok(Self {
            nodes,
            weights,
            scheme: QuadratureScheme::TruncatedTrapezoid,
            horizon: Some(horizon),
        })
    }

    /// Gauss–Laguerre rule rescaled to `t = x / decay_rate`, with weights
    /// for the plain integral `∫₀^∞ f(t) dt` (the `e^{x}` factor folded in).
    pub fn gauss_laguerre(n: usize, decay_rate: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation(format!("quadrature needs at least 2 nodes, got {n}")));
        }
        check_decay(decay_rate)?;
        let (x, plain) = laguerre_nodes_plain_weights(n);
        Ok(Self {
            nodes: x.iter().map(|x| x / decay_rate).collect(),
            weights: plain.iter().map(|w| w / decay_rate).collect(),
            scheme: QuadratureScheme::GaussLaguerre,
            horizon: None,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Step of a uniform rule starting at zero, so that `t_i + t_j = (i+j)·h`.
    pub fn uniform_step(&self) -> Option<f64> {
        (self.scheme == QuadratureScheme::TruncatedTrapezoid && self.nodes[0] == 0.0)
            .then(|| self.nodes[1])
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum()
    }
}

fn check_decay(decay_rate: f64) -> Result<()> {
    if !(decay_rate.is_finite() && decay_rate > 0.0) {
        return Err(Error::NonPositiveDecay(decay_rate));
    }
    Ok(())
}

/// `T = ln(1/ε)/decay_rate`.
pub fn truncation_horizon(decay_rate: f64, tail_eps: f64) -> Result<f64> {
    check_decay(decay_rate)?;
    Ok((1.0 / tail_eps).ln() / decay_rate)
}

pub fn build_quadrature(scheme: QuadratureScheme, n: usize, decay_rate: f64) -> Result<TimeQuadrature> {
    build_quadrature_with(scheme, n, decay_rate, DEFAULT_TAIL_EPS)
}

pub fn build_quadrature_with(
    scheme: QuadratureScheme,
    n: usize,
    decay_rate: f64,
    tail_eps: f64,
) -> Result<TimeQuadrature> {
    match scheme {
        QuadratureScheme::TruncatedTrapezoid => {
            TimeQuadrature::trapezoid(n, truncation_horizon(decay_rate, tail_eps)?)
        }
        QuadratureScheme::GaussLaguerre => TimeQuadrature::gauss_laguerre(n, decay_rate),
    }
}

/// Scaled Laguerre functions `e^{-x/2} L_k(x)` for `k = 0..=n`.
///
/// The scaling keeps every value bounded by one, so the recurrence is safe at
/// the large nodes of high-order rules.
fn scaled_laguerre(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let e = (-0.5 * x).exp();
    out.push(e);
    if n >= 1 {
        out.push((1.0 - x) * e);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Nodes of the n-point Gauss–Laguerre rule and the weights `w_i e^{x_i}`
/// of the plain integral.
fn laguerre_nodes_plain_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Golub–Welsch: eigenvalues of the Jacobi matrix.
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * i as f64 + 1.0
        } else if i.abs_diff(j) == 1 {
            i.max(j) as f64
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    x.sort_by(|a, b| a.total_cmp(b));
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let l = scaled_laguerre(n, *xi);
            let (ln, lm) = (l[n], l[n - 1]);
            let denom = n as f64 * (ln - lm);
            if denom == 0.0 {
                break;
            }
            let step = ln * *xi / denom;
            if !step.is_finite() {
                break;
            }
            *xi -= step;
        }
    }
    let w = x
        .iter()
        .map(|&xi| {
            let l = scaled_laguerre(n - 1, xi);
            1.0 / l.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (x, w)
}

/// Standard n-point Gauss–Laguerre rule for `∫₀^∞ e^{-x} f(x) dx`.
pub fn gauss_laguerre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, plain) = laguerre_nodes_plain_weights(n);
    let w = x.iter().zip(&plain).map(|(x, p)| p * (-x).exp()).collect();
    (x, w)
}
