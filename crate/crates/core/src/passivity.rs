//! Impedance-passivity certificates.
//!
//! A certificate assigns a Hermitian `Q_ω ⪰ 0` to every grid mode. It is valid
//! when `C_ω = B_ω* Q_ω` and `A_ω* Q_ω + Q_ω A_ω ⪯ 0`; the storage of a state is
//! then `S(z) = ⟨Q_ω z, z⟩`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Evidence, Property, Tolerances};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::json::cmat;
use crate::linalg::{self, CMat, CVec, C64};
use crate::lti_mode::{internal_form_test, spectral_abscissa};
use crate::symbol::{evaluate_symbol, ModeTriple, SymbolFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeQ {
    pub omega: Vec<f64>,
    #[serde(rename = "Q", with = "cmat")]
    pub q: CMat,
}

/// Residuals of the three certificate conditions at one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassivityMargins {
    pub omega: Vec<f64>,
    /// `‖C - B*Q‖` (operator norm).
    pub constraint_residual: f64,
    /// `‖C‖`, which scales the allowed constraint residual.
    pub c_norm: f64,
    /// `λ_max(A*Q + QA)`.
    pub dissipation_max_eig: f64,
    /// `λ_min((Q + Q*)/2)`.
    pub q_min_eig: f64,
    /// `‖Q - Q*‖_F / max(1, ‖Q‖_F)`.
    pub q_hermitian_defect: f64,
    pub q_norm: f64,
}

impl PassivityMargins {
    pub fn compute(mode: &ModeTriple, q: &CMat) -> Result<Self> {
        let n = mode.n();
        if q.shape() != (n, n) {
            return Err(Error::Validation(format!(
                "mode {:?}: Q is {}x{}, expected {n}x{n}",
                mode.omega(),
                q.nrows(),
                q.ncols()
            )));
        }
        let residual = mode.c() - mode.b().adjoint() * q;
        let lyap = mode.a().adjoint() * q + q * mode.a();
        let q_eigs = linalg::hermitian_eigenvalues(q);
        Ok(Self {
            omega: mode.omega().to_vec(),
            constraint_residual: linalg::op_norm(&residual),
            c_norm: linalg::op_norm(mode.c()),
            dissipation_max_eig: linalg::hermitian_eigenvalues(&lyap)
                .last()
                .copied()
                .unwrap_or(0.0),
            q_min_eig: q_eigs.first().copied().unwrap_or(0.0),
            q_hermitian_defect: linalg::hermitian_defect(q) / q.norm().max(1.0),
            q_norm: linalg::op_norm(q),
        })
    }

    /// Signed slack of `Q = Q* ⪰ 0`.
    pub fn storage_slack(&self, tol: f64) -> f64 {
        (self.q_min_eig + tol).min(tol - self.q_hermitian_defect)
    }

    /// Signed slack of `‖C - B*Q‖ ≤ tol·(1 + ‖C‖)`.
    pub fn constraint_slack(&self, tol: f64) -> f64 {
        tol * (1.0 + self.c_norm) - self.constraint_residual
    }

    /// Signed slack of `λ_max(A*Q + QA) ≤ tol`.
    pub fn dissipation_slack(&self, tol: f64) -> f64 {
        tol - self.dissipation_max_eig
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.storage_slack(tol) >= 0.0
            && self.constraint_slack(tol) >= 0.0
            && self.dissipation_slack(tol) >= 0.0
    }
}

/// Per-mode storage matrices on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CertificateRepr", into = "CertificateRepr")]
pub struct PassivityCertificate {
    modes: Vec<ModeQ>,
    sup_norm: f64,
    margins: Vec<PassivityMargins>,
}

#[derive(Serialize, Deserialize)]
struct CertificateRepr {
    modes: Vec<ModeQ>,
    #[serde(default, skip_deserializing)]
    sup_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    margins: Vec<PassivityMargins>,
}

impl From<CertificateRepr> for PassivityCertificate {
    fn from(r: CertificateRepr) -> Self {
        let mut cert = Self::new(r.modes);
        cert.margins = r.margins;
        cert
    }
}

impl From<PassivityCertificate> for CertificateRepr {
    fn from(c: PassivityCertificate) -> Self {
        Self {
            modes: c.modes,
            sup_norm: c.sup_norm,
            margins: c.margins,
        }
    }
}

impl PassivityCertificate {
    pub fn new(modes: Vec<ModeQ>) -> Self {
        let sup_norm = modes
            .iter()
            .map(|m| linalg::op_norm(&m.q))
            .fold(0.0, f64::max);
        Self {
            modes,
            sup_norm,
            margins: Vec::new(),
        }
    }

    pub fn modes(&self) -> &[ModeQ] {
        &self.modes
    }

    /// `max_ω ‖Q_ω‖` over the stored modes.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Margins recorded by the last verification, empty if never verified.
    pub fn margins(&self) -> &[PassivityMargins] {
        &self.margins
    }

    pub fn q_at(&self, omega: &[f64]) -> Result<&CMat> {
        self.modes
            .iter()
            .find(|m| same_point(&m.omega, omega))
            .map(|m| &m.q)
            .ok_or_else(|| Error::MissingMode(omega.to_vec()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

/// Per-mode margins of `cert` against `family` on `grid`.
pub fn certificate_margins(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    cert: &PassivityCertificate,
) -> Result<Vec<PassivityMargins>> {
    grid.points()
        .par_iter()
        .map(|omega| {
            let q = cert.q_at(omega)?;
            let mode = evaluate_symbol(family, omega)?;
            mode.require_square_transfer()?;
            PassivityMargins::compute(&mode, q)
        })
        .collect()
}

/// Checks every grid mode of `cert` and reports the three conditions as
/// evidence. `sup_norm` is reported, never decisive; a note is added when the
/// boundary modes carry a `‖Q‖` far above the interior median.
pub fn verify_certificate(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    cert: &PassivityCertificate,
    tolerances: &Tolerances,
) -> Result<Certificate> {
    let margins = certificate_margins(family, grid, cert)?;
    let tol = tolerances.passivity;
    let mut evidence = Vec::with_capacity(3 * margins.len());
    for m in &margins {
        evidence.push(
            Evidence::measured(&m.omega, "storage-psd", m.storage_slack(tol))
                .with_detail(format!("lambda_min(Q) = {:e}", m.q_min_eig)),
        );
        evidence.push(
            Evidence::measured(&m.omega, "collocation", m.constraint_slack(tol))
                .with_detail(format!("|C - B*Q| = {:e}", m.constraint_residual)),
        );
        evidence.push(
            Evidence::measured(&m.omega, "dissipation", m.dissipation_slack(tol))
                .with_detail(format!("lambda_max(A*Q + QA) = {:e}", m.dissipation_max_eig)),
        );
    }
    let sup = margins.iter().map(|m| m.q_norm).fold(0.0, f64::max);
    let mut notes = vec![format!("sup_norm = {sup:e}")];
    if let Some(w) = growth_warning(grid, &margins, tolerances.growth_factor) {
        notes.push(w);
    }
    Ok(Certificate::from_evidence(Property::Passivity, evidence, tolerances.clone(), notes))
}

/// Verifies and stores the margins on the certificate.
pub fn verify_and_record(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    cert: &mut PassivityCertificate,
    tolerances: &Tolerances,
) -> Result<Certificate> {
    let verdict = verify_certificate(family, grid, cert, tolerances)?;
    cert.margins = certificate_margins(family, grid, cert)?;
    Ok(verdict)
}

fn growth_warning(grid: &FrequencyGrid, margins: &[PassivityMargins], factor: f64) -> Option<String> {
    let radius = |w: &[f64]| w.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let outer = grid.points().iter().map(|w| radius(w)).fold(0.0, f64::max);
    let (boundary, mut interior): (Vec<_>, Vec<_>) = margins
        .iter()
        .partition(|m| radius(&m.omega) >= outer * (1.0 - 1e-12));
    if interior.is_empty() || boundary.is_empty() {
        return None;
    }
    interior.sort_by(|a, b| a.q_norm.total_cmp(&b.q_norm));
    let k = interior.len();
    let median = if k % 2 == 1 {
        interior[k / 2].q_norm
    } else {
        0.5 * (interior[k / 2 - 1].q_norm + interior[k / 2].q_norm)
    };
    let peak = boundary.iter().map(|m| m.q_norm).fold(0.0, f64::max);
    (peak > factor * median).then(|| {
        format!(
            "warning: boundary |Q| = {peak:e} exceeds {factor} x interior median {median:e}; \
             the supremum over all frequencies may be unbounded"
        )
    })
}

/// `Q_ω = I` on every mode of an internally relaxation family.
pub fn identity_certificate(family: &SymbolFamily, grid: &FrequencyGrid, tol: f64) -> Result<PassivityCertificate> {
    let modes: Vec<Result<ModeQ>> = grid
        .points()
        .par_iter()
        .map(|omega| {
            let mode = evaluate_symbol(family, omega)?;
            let test = internal_form_test(&mode, tol);
            if !test.passed {
                return Err(Error::InternalForm {
                    omega: omega.clone(),
                    detail: format!(
                        "|A - A*| = {:e}, lambda_max(herm A) = {:e}, |B - C*| = {}",
                        test.hermitian_defect,
                        test.max_eigenvalue,
                        test.collocation_defect
                            .map_or("shape mismatch".to_string(), |d| format!("{d:e}"))
                    ),
                });
            }
            Ok(ModeQ {
                omega: omega.clone(),
                q: CMat::identity(mode.n(), mode.n()),
            })
        })
        .collect();
    Ok(PassivityCertificate::new(modes.into_iter().collect::<Result<_>>()?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovOutcome {
    Found { q: CMat, margins: PassivityMargins },
    /// The least-norm candidate violates a condition. This does not disprove
    /// passivity; another `Q` may exist.
    Rejected { q: CMat, margins: PassivityMargins },
}

impl LyapunovOutcome {
    pub fn q(&self) -> &CMat {
        match self {
            Self::Found { q, .. } | Self::Rejected { q, .. } => q,
        }
    }

    pub fn margins(&self) -> &PassivityMargins {
        match self {
            Self::Found { margins, .. } | Self::Rejected { margins, .. } => margins,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, Self::Found { .. })
    }
}

/// Orthonormal (Frobenius) basis of the real vector space of Hermitian n×n matrices.
fn hermitian_basis(n: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(n * n);
    for j in 0..n {
        let mut e = CMat::zeros(n, n);
        e[(j, j)] = linalg::c(1.0);
        basis.push(e);
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let mut e = CMat::zeros(n, n);
            e[(j, k)] = linalg::c(s);
            e[(k, j)] = linalg::c(s);
            basis.push(e);
            let mut e = CMat::zeros(n, n);
            e[(j, k)] = C64::new(0.0, s);
            e[(k, j)] = C64::new(0.0, -s);
            basis.push(e);
        }
    }
    basis
}

/// Least-norm Hermitian `Q` with `B*Q = C`, then the dissipation and storage
/// checks.
pub fn lyapunov_candidate(mode: &ModeTriple, tol: f64) -> Result<LyapunovOutcome> {
    mode.require_square_transfer()?;
    let abscissa = spectral_abscissa(mode)?;
    if abscissa >= 0.0 {
        return Err(Error::NotStable {
            omega: mode.omega().to_vec(),
            abscissa,
        });
    }
    let (n, m) = (mode.n(), mode.m());
    let rank = linalg::rank(mode.b(), 1e-12);
    if rank < m {
        return Err(Error::RankDeficient { rank, cols: m });
    }

    // Real least squares in the coordinates of the Hermitian basis.
    let basis = hermitian_basis(n);
    let bstar = mode.b().adjoint();
    let rows = 2 * m * n;
    let mut lhs = DMatrix::<f64>::zeros(rows, basis.len());
    for (col, e) in basis.iter().enumerate() {
        let image = &bstar * e;
        for (i, z) in image.iter().enumerate() {
            lhs[(2 * i, col)] = z.re;
            lhs[(2 * i + 1, col)] = z.im;
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(rows);
    for (i, z) in mode.c().iter().enumerate() {
        rhs[2 * i] = z.re;
        rhs[2 * i + 1] = z.im;
    }
    let svd = lhs.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let theta = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let mut q = CMat::zeros(n, n);
    for (e, t) in basis.iter().zip(theta.iter()) {
        q += e * linalg::c(*t);
    }

    let margins = PassivityMargins::compute(mode, &q)?;
    Ok(if margins.passes(tol) {
        LyapunovOutcome::Found { q, margins }
    } else {
        LyapunovOutcome::Rejected { q, margins }
    })
}

/// `S(z) = Re⟨Q_ω z, z⟩`. Negative values down to `-tol·max(1, ‖Q‖‖z‖²)` are
/// rounding and clamp to zero.
pub fn storage_value(cert: &PassivityCertificate, omega: &[f64], z: &[C64], tol: f64) -> Result<f64> {
    let q = cert.q_at(omega)?;
    if z.len() != q.nrows() {
        return Err(Error::Validation(format!(
            "state has length {}, Q is {}x{}",
            z.len(),
            q.nrows(),
            q.ncols()
        )));
    }
    let zv = CVec::from_column_slice(z);
    let value = (q * &zv).dotc(&zv).re;
    if value >= 0.0 {
        return Ok(value);
    }
    let floor = tol * (linalg::op_norm(q) * zv.norm_squared()).max(1.0);
    if value >= -floor {
        Ok(0.0)
    } else {
        Err(Error::CertificateInconsistent(format!(
            "storage at {omega:?} is {value:e}, Q is not positive semidefinite"
        )))
    }
}

/// `Σ_k W_k S_k(z_k)` over the grid.
pub fn aggregate_storage(
    cert: &PassivityCertificate,
    grid: &FrequencyGrid,
    states: &[Vec<C64>],
    tol: f64,
) -> Result<f64> {
    if states.len() != grid.len() {
        return Err(Error::Validation(format!(
            "expected {} per-mode states, got {}",
            grid.len(),
            states.len()
        )));
    }
    let mut total = 0.0;
    for ((omega, w), z) in grid.iter().zip(states) {
        total += w * storage_value(cert, omega, z, tol)?;
    }
    Ok(total)
}
