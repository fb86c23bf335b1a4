//! Small dense complex linear algebra used by the per-mode analyses.
//!
//! Everything here works on `DMatrix<Complex64>`; the matrices involved are
//! tiny (state dimension) except for the Hankel discretizations, which only
//! need Hermitian eigenvalues.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const SCHUR_ITER_PER_DIM: usize = 1000;
const NEGLIGIBLE_ENTRY: f64 = f64::EPSILON * f64::EPSILON;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Builds a complex matrix from real rows.
pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(nr, nc, |i, j| c(rows[i][j]))
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Dense matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(a: &CMat) -> CMat {
    a.exp()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Frobenius norm of `M - M*`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut h = hermitian_part(m);
    // Entries far below the matrix scale (down to subnormals) can break the
    // tridiagonal reduction; they cannot move any eigenvalue measurably.
    let floor = h.iter().map(|z| z.norm()).fold(0.0, f64::max) * NEGLIGIBLE_ENTRY;
    h.apply(|z| {
        if z.norm() < floor {
            *z = C64::new(0.0, 0.0);
        }
    });
    let mut ev: Vec<f64> = if h.iter().all(|z| z.im == 0.0) {
        h.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.symmetric_eigenvalues().iter().copied().collect()
    };
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Outcome of a tolerance-aware positive semidefiniteness check on `(M + M*)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub asymmetry: f64,
    /// `λ_min + tol·max(1, λ_max)`; nonnegative means the check passes.
    pub margin: f64,
}

impl PsdCheck {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

pub fn psd_check(m: &CMat, tol: f64) -> PsdCheck {
    let ev = hermitian_eigenvalues(m);
    let min = ev.first().copied().unwrap_or(0.0);
    let max = ev.last().copied().unwrap_or(0.0);
    PsdCheck {
        min_eigenvalue: min,
        max_eigenvalue: max,
        asymmetry: hermitian_defect(m),
        margin: min + tol * max.max(1.0),
    }
}

fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let s = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_ITER_PER_DIM * n.max(1))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = s.unpack();
    // A complex Schur form must be upper triangular.
    let scale = t.norm().max(f64::MIN_POSITIVE);
    for i in 1..n {
        if t[(i, i - 1)].norm() > 1e3 * f64::EPSILON * scale {
            return Err(Error::Numerical(
                "Schur form did not reach triangular shape".into(),
            ));
        }
    }
    Ok((q, t))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    if a.nrows() == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let (_, t) = schur(a)?;
    Ok((0..a.nrows()).map(|i| t[(i, i)]).collect())
}

/// Maximum real part over the spectrum.
pub fn spectral_abscissa(a: &CMat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Right eigenvectors (unit columns), their inverse, and the 2-norm condition
/// number of the eigenvector matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMat,
    pub inverse: Option<CMat>,
    pub condition: f64,
}

pub fn eigen_decomposition(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let (q, t) = if n == 1 {
        (CMat::identity(1, 1), a.clone())
    } else {
        schur(a)?
    };
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);

    // Back substitution on (T - λ_k I) x = 0 with x_k = 1, as in LAPACK's trevc.
    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = c(1.0);
        for j in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for l in (j + 1)..=k {
                s += t[(j, l)] * x[(l, k)];
            }
            let mut d = t[(j, j)] - values[k];
            if d.norm() < smin {
                d = c(smin);
            }
            x[(j, k)] = -s / d;
        }
    }
    let mut vectors = &q * x;
    for mut col in vectors.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 && nrm.is_finite() {
            col.unscale_mut(nrm);
        }
    }
    let sv = vectors.singular_values();
    let smax = sv.max();
    let smin_v = sv.min();
    let condition = if smin_v > 0.0 { smax / smin_v } else { f64::INFINITY };
    let inverse = vectors.clone().try_inverse();
    Ok(EigenDecomposition {
        values,
        vectors,
        inverse,
        condition,
    })
}

/// Numerical rank from singular values with a relative cutoff.
pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let cutoff = rel_tol * sv.max().max(f64::MIN_POSITIVE);
    sv.iter().filter(|&&s| s > cutoff).count()
}
