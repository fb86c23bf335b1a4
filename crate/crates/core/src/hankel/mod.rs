//! Discretized Hankel operators `(ℋv)(t) = ∫₀^∞ g(t+τ) v(τ) dτ`.
//!
//! On a time quadrature with nodes `t_i` and weights `w_i` the operator is
//! represented by the block matrix `H_ij = √(w_i w_j)·g(t_i + t_j)`. With that
//! symmetric weighting, positive semidefiniteness of `H` is nonnegativity of
//! the operator in the weighted ℓ² inner product.

mod quadrature;

pub use quadrature::{
    build_quadrature, build_quadrature_with, gauss_laguerre_rule, truncation_horizon,
    QuadratureScheme, TimeQuadrature, DEFAULT_TAIL_EPS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::linalg::{self, CMat, C64};
use crate::lti_mode::{impulse_response, spectral_abscissa};
use crate::symbol::{evaluate_symbol, ModeTriple, SymbolFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct HankelDiscretization {
    pub quadrature: TimeQuadrature,
    pub matrix: CMat,
    /// Number of input channels `m`.
    pub channels: usize,
    /// `‖H - H*‖_F / max(1, ‖H‖_F)`.
    pub symmetry_defect: f64,
    /// Eigenvalues of `(H + H*)/2`, ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Assembles `√(w_i w_j)·g(t_i + t_j)` without any stability check.
pub fn hankel_matrix(mode: &ModeTriple, quad: &TimeQuadrature) -> Result<CMat> {
    let (p, m) = (mode.p(), mode.m());
    let n = quad.len();
    let t = quad.nodes();
    let sw: Vec<f64> = quad.weights().iter().map(|w| w.sqrt()).collect();

    // g(t_i + t_j) depends on (i, j) symmetrically; a uniform rule from zero
    // only needs the 2n - 1 sums (i + j)·h.
    let samples: Vec<CMat>;
    let index: Box<dyn Fn(usize, usize) -> usize>;
    if let Some(h) = quad.uniform_step() {
        samples = (0..2 * n - 1)
            .map(|k| impulse_response(mode, k as f64 * h))
            .collect::<Result<_>>()?;
        index = Box::new(|i, j| i + j);
    } else {
        samples = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                impulse_response(mode, t[i.min(j)] + t[i.max(j)])
            })
            .collect::<Result<_>>()?;
        index = Box::new(move |i, j| i * n + j);
    }

    let mut hm = CMat::zeros(n * p, n * m);
    for i in 0..n {
        for j in 0..n {
            let g = &samples[index(i, j)];
            let s = sw[i] * sw[j];
            for r in 0..p {
                for c in 0..m {
                    hm[(i * p + r, j * m + c)] = g[(r, c)] * s;
                }
            }
        }
    }
    Ok(hm)
}

/// Builds the Hankel discretization of an exponentially stable square mode.
pub fn build_hankel(mode: &ModeTriple, quad: &TimeQuadrature) -> Result<HankelDiscretization> {
    mode.require_square_transfer()?;
    let abscissa = spectral_abscissa(mode)?;
    if abscissa >= 0.0 {
        return Err(Error::NotStable {
            omega: mode.omega().to_vec(),
            abscissa,
        });
    }
    let matrix = hankel_matrix(mode, quad)?;
    Ok(discretization_from_matrix(matrix, quad.clone(), mode.m()))
}

fn discretization_from_matrix(matrix: CMat, quadrature: TimeQuadrature, channels: usize) -> HankelDiscretization {
    let symmetry_defect = linalg::hermitian_defect(&matrix) / matrix.norm().max(1.0);
    let eigenvalues = linalg::hermitian_eigenvalues(&matrix);
    HankelDiscretization {
        quadrature,
        channels,
        symmetry_defect,
        min_eigenvalue: eigenvalues.first().copied().unwrap_or(0.0),
        max_eigenvalue: eigenvalues.last().copied().unwrap_or(0.0),
        eigenvalues,
        matrix,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelTest {
    pub passed: bool,
    /// `min(tol - symmetry_defect, λ_min + tol·max(1, λ_max))`.
    pub margin: f64,
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Self-adjointness and nonnegativity of the discretized operator.
pub fn hankel_psd_test(disc: &HankelDiscretization, tol: f64) -> HankelTest {
    let margin = (tol - disc.symmetry_defect)
        .min(disc.min_eigenvalue + tol * disc.max_eigenvalue.max(1.0));
    HankelTest {
        passed: margin >= 0.0,
        margin,
        symmetry_defect: disc.symmetry_defect,
        min_eigenvalue: disc.min_eigenvalue,
        max_eigenvalue: disc.max_eigenvalue,
    }
}

fn check_len(disc: &HankelDiscretization, v: &[C64]) -> Result<()> {
    let expect = disc.quadrature.len() * disc.channels;
    if v.len() != expect {
        return Err(Error::Validation(format!(
            "vector has length {}, expected {expect} (nodes x channels)",
            v.len()
        )));
    }
    Ok(())
}

fn root_weights(quad: &TimeQuadrature, channels: usize) -> Vec<f64> {
    quad.weights()
        .iter()
        .flat_map(|w| std::iter::repeat_n(w.sqrt(), channels))
        .collect()
}

/// `output(t_i) = Σ_j w_j g(t_i + t_j) v(t_j)`; `v` is node-major, channel-minor.
pub fn apply_hankel(disc: &HankelDiscretization, v: &[C64]) -> Result<Vec<C64>> {
    check_len(disc, v)?;
    let sw = root_weights(&disc.quadrature, disc.channels);
    let x = linalg::CVec::from_iterator(v.len(), v.iter().zip(&sw).map(|(a, s)| a * s));
    let y = &disc.matrix * x;
    Ok(y.iter().zip(&sw).map(|(a, s)| a / s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryValue {
    /// `½ Re⟨ℋv, v⟩`.
    pub value: f64,
    pub imaginary_residual: f64,
}

/// `ℌ(v) = ½⟨ℋv, v⟩` on the quadrature.
pub fn memory_functional(disc: &HankelDiscretization, v: &[C64]) -> Result<MemoryValue> {
    let form = weighted_form(disc, v, v)?;
    Ok(MemoryValue {
        value: 0.5 * form.re,
        imaginary_residual: 0.5 * form.im,
    })
}

/// `⟨ℋv, w⟩ = Σ_i w_i ⟨(ℋv)(t_i), w(t_i)⟩`.
pub fn weighted_form(disc: &HankelDiscretization, v: &[C64], w: &[C64]) -> Result<C64> {
    check_len(disc, v)?;
    check_len(disc, w)?;
    Ok(matrix_form(&disc.matrix, &disc.quadrature, disc.channels, v, w))
}

fn matrix_form(h: &CMat, quad: &TimeQuadrature, channels: usize, v: &[C64], w: &[C64]) -> C64 {
    let sw = root_weights(quad, channels);
    let x = linalg::CVec::from_iterator(v.len(), v.iter().zip(&sw).map(|(a, s)| a * s));
    let z = linalg::CVec::from_iterator(w.len(), w.iter().zip(&sw).map(|(a, s)| a * s));
    (h * x).dotc(&z).conj()
}

/// Plancherel aggregation `Σ_k W_k ⟨ℋ̂_{ω_k} v̂_k, ŵ_k⟩` of per-mode Hankel forms.
///
/// Marginal modes are allowed here: the form stays finite whenever the
/// supplied profiles decay, and the quadrature only samples it.
pub fn aggregate_hankel_form(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    quad: &TimeQuadrature,
    v: &[Vec<C64>],
    w: &[Vec<C64>],
) -> Result<C64> {
    if v.len() != grid.len() || w.len() != grid.len() {
        return Err(Error::Validation(format!(
            "expected {} per-mode vectors, got {} and {}",
            grid.len(),
            v.len(),
            w.len()
        )));
    }
    let forms: Vec<C64> = grid
        .points()
        .par_iter()
        .zip(v.par_iter().zip(w.par_iter()))
        .map(|(omega, (vk, wk))| {
            let mode = evaluate_symbol(family, omega)?;
            mode.require_square_transfer()?;
            let expect = quad.len() * mode.m();
            if vk.len() != expect || wk.len() != expect {
                return Err(Error::Validation(format!(
                    "mode {omega:?}: vectors must have length {expect}"
                )));
            }
            let h = hankel_matrix(&mode, quad)?;
            Ok(matrix_form(&h, quad, mode.m(), vk, wk))
        })
        .collect::<Result<_>>()?;
    Ok(forms
        .iter()
        .zip(grid.weights())
        .fold(C64::new(0.0, 0.0), |acc, (f, wk)| acc + f * *wk))
}

/// CSV dump: `node,weight` rows, the matrix row-major with interleaved
/// `re,im` pairs, then the eigenvalues ascending.
pub fn write_hankel_csv<W: Write>(disc: &HankelDiscretization, mut out: W) -> Result<()> {
    writeln!(out, "# nodes")?;
    writeln!(out, "node,weight")?;
    for (t, w) in disc.quadrature.nodes().iter().zip(disc.quadrature.weights()) {
        writeln!(out, "{t:e},{w:e}")?;
    }
    writeln!(out, "# matrix {}x{} (re,im interleaved)", disc.matrix.nrows(), disc.matrix.ncols())?;
    for i in 0..disc.matrix.nrows() {
        let row: Vec<String> = (0..disc.matrix.ncols())
            .map(|j| {
                let z = disc.matrix[(i, j)];
                format!("{:e},{:e}", z.re, z.im)
            })
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    writeln!(out, "# eigenvalues")?;
    writeln!(out, "eigenvalue")?;
    for e in &disc.eigenvalues {
        writeln!(out, "{e:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
