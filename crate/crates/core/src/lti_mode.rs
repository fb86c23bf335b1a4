//! Per-frequency LTI analysis.
//!
//! Each mode `(A, B, C)` of a symbol family is an ordinary LTI system with
//! impulse response `g(t) = C e^{At} B`. The family is of relaxation type iff
//! every mode's `g` is completely monotone. Three complementary checks live
//! here:
//!
//! * [`cm_test_moments`]: the signs of `(-1)^k C A^k B`, a necessary screen;
//! * [`cm_test_bernstein`]: extraction of `g(t) = Σ G_i e^{-p_i t}` from an
//!   eigendecomposition, exact when `A` is diagonalizable with real spectrum;
//! * [`internal_form_test`]: the structural sufficient condition
//!   `A = A* ⪯ 0`, `B = C*`.

use serde::{Deserialize, Serialize};

use crate::certificate::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{self, psd_check, CMat};
use crate::symbol::ModeTriple;

pub const DEFAULT_K_MAX: usize = 20;
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

/// `C e^{At} B`.
pub fn impulse_response(mode: &ModeTriple, t: f64) -> Result<CMat> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("time must be finite and nonnegative, got {t}")));
    }
    let e = linalg::expm(&mode.a().scale(t));
    let g = mode.c() * e * mode.b();
    if !linalg::is_finite(&g) {
        return Err(Error::Overflow {
            abscissa: spectral_abscissa(mode).unwrap_or(f64::NAN),
        });
    }
    Ok(g)
}

/// `C A^k B`, the k-th derivative of the impulse response at `t = 0`.
pub fn derivative_moment(mode: &ModeTriple, k: usize) -> CMat {
    let mut x = mode.b().clone();
    for _ in 0..k {
        x = mode.a() * x;
    }
    mode.c() * x
}

pub fn spectral_abscissa(mode: &ModeTriple) -> Result<f64> {
    linalg::spectral_abscissa(mode.a())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    pub passed: bool,
    pub first_failing_k: Option<usize>,
    /// Smallest eigenvalue of the symmetrized signed moment at the first failing `k`.
    pub failing_value: Option<f64>,
    /// Highest `k` actually checked; lower than `k_max` if a moment overflowed.
    pub checked_up_to: usize,
    /// Minimum over `k` of `λ_min + tol·(1 + max|entry|)`.
    pub margin: f64,
    pub max_asymmetry: f64,
}

/// Checks `(-1)^k C A^k B ⪰ -tol·(1 + max|entry|)·I` for `k = 0..=k_max`.
///
/// Necessary for complete monotonicity but not sufficient.
pub fn cm_test_moments(mode: &ModeTriple, k_max: usize, tol: f64) -> Result<MomentTest> {
    mode.require_square_transfer()?;
    let mut x = mode.b().clone();
    let mut margin = f64::INFINITY;
    let mut first = None;
    let mut value = None;
    let mut checked = 0;
    let mut asym: f64 = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            x = mode.a() * x;
        }
        let mut mk = mode.c() * &x;
        if !linalg::is_finite(&mk) {
            break;
        }
        if k % 2 == 1 {
            mk.neg_mut();
        }
        let entry_max = mk.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let check = psd_check(&mk, tol);
        let mk_margin = check.min_eigenvalue + tol * (1.0 + entry_max);
        asym = asym.max(check.asymmetry);
        if mk_margin < 0.0 && first.is_none() {
            first = Some(k);
            value = Some(check.min_eigenvalue);
        }
        margin = margin.min(mk_margin);
        checked = k;
    }
    Ok(MomentTest {
        passed: first.is_none(),
        first_failing_k: first,
        failing_value: value,
        checked_up_to: checked,
        margin,
        max_asymmetry: asym,
    })
}

/// `g(t) = Σ G_i e^{-p_i t}` with `p_i ≥ 0` and Hermitian PSD `G_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinForm {
    pub poles: Vec<f64>,
    pub residues: Vec<CMat>,
}

impl BernsteinForm {
    pub fn evaluate(&self, t: f64) -> CMat {
        let m = self.residues.first().map_or(0, |r| r.nrows());
        self.poles
            .iter()
            .zip(&self.residues)
            .fold(CMat::zeros(m, m), |acc, (p, g)| acc + g.scale((-p * t).exp()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BernsteinOutcome {
    Pass(BernsteinForm),
    Fail { reason: String },
    NotApplicable { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinTest {
    pub outcome: BernsteinOutcome,
    /// Signed slack over poles and residues; `None` when not applicable.
    pub margin: Option<f64>,
    pub condition: f64,
}

impl BernsteinTest {
    pub fn status(&self) -> TriState {
        match self.outcome {
            BernsteinOutcome::Pass(_) => TriState::Pass,
            BernsteinOutcome::Fail { .. } => TriState::Fail,
            BernsteinOutcome::NotApplicable { .. } => TriState::NotApplicable,
        }
    }
}

pub fn cm_test_bernstein(mode: &ModeTriple, tol: f64) -> Result<BernsteinTest> {
    cm_test_bernstein_with(mode, tol, DEFAULT_CONDITION_LIMIT)
}

/// Bernstein-form test with an explicit eigenvector condition limit.
pub fn cm_test_bernstein_with(
    mode: &ModeTriple,
    tol: f64,
    condition_limit: f64,
) -> Result<BernsteinTest> {
    mode.require_square_transfer()?;
    let ed = linalg::eigen_decomposition(mode.a())?;
    let not_applicable = |reason: String, condition: f64| BernsteinTest {
        outcome: BernsteinOutcome::NotApplicable { reason },
        margin: None,
        condition,
    };
    let inv = match (&ed.inverse, ed.condition <= condition_limit) {
        (Some(inv), true) => inv,
        _ => {
            return Ok(not_applicable(
                format!(
                    "eigenvector condition number {:.3e} exceeds {:.1e}",
                    ed.condition, condition_limit
                ),
                ed.condition,
            ))
        }
    };

    let n = mode.n();
    let raw: Vec<CMat> = (0..n)
        .map(|i| (mode.c() * ed.vectors.column(i)) * (inv.row(i) * mode.b()))
        .collect();
    let scale = raw.iter().map(|r| r.norm()).fold(0.0, f64::max).max(1.0);
    let negligible = |r: &CMat| r.norm() <= tol * scale;

    // Real eigenvalues, clustered so that repeated poles share one residue.
    let mut real: Vec<(f64, CMat)> = Vec::new();
    for (lambda, r) in ed.values.iter().zip(raw) {
        if negligible(&r) {
            continue;
        }
        if lambda.im.abs() > tol * lambda.norm().max(1.0) {
            return Ok(not_applicable(
                format!("non-real eigenvalue {:.6}{:+.6}i carries a residue", lambda.re, lambda.im),
                ed.condition,
            ));
        }
        real.push((lambda.re, r));
    }
    real.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, usize, CMat)> = Vec::new();
    for (l, r) in real {
        match groups.last_mut() {
            Some((sum, cnt, g)) if (l - *sum / *cnt as f64).abs() <= 1e-8 * l.abs().max(1.0) => {
                *sum += l;
                *cnt += 1;
                *g += r;
            }
            _ => groups.push((l, 1, r)),
        }
    }

    let mut margin = f64::INFINITY;
    let mut reason = None;
    let mut form = BernsteinForm {
        poles: Vec::new(),
        residues: Vec::new(),
    };
    for (sum, cnt, g) in groups {
        if negligible(&g) {
            continue;
        }
        let pole = -sum / cnt as f64;
        let pole_margin = pole + tol;
        let psd = psd_check(&g, tol);
        let asym_margin = tol * g.norm().max(1.0) - psd.asymmetry;
        let m = pole_margin.min(psd.margin).min(asym_margin);
        if m < margin {
            margin = m;
        }
        if reason.is_none() {
            if pole_margin < 0.0 {
                reason = Some(format!("pole {pole:.6e} is negative (growing exponential)"));
            } else if psd.margin < 0.0 {
                reason = Some(format!(
                    "residue at pole {pole:.6e} has eigenvalue {:.6e}",
                    psd.min_eigenvalue
                ));
            } else if asym_margin < 0.0 {
                reason = Some(format!(
                    "residue at pole {pole:.6e} is not Hermitian (defect {:.3e})",
                    psd.asymmetry
                ));
            }
        }
        form.poles.push(pole);
        form.residues.push(linalg::hermitian_part(&g));
    }
    if !margin.is_finite() {
        // Zero impulse response: the empty conic combination.
        margin = tol;
    }
    let outcome = match reason {
        Some(reason) => BernsteinOutcome::Fail { reason },
        None => BernsteinOutcome::Pass(form),
    };
    Ok(BernsteinTest {
        outcome,
        margin: Some(margin),
        condition: ed.condition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalFormTest {
    pub passed: bool,
    /// `‖A - A*‖_F`.
    pub hermitian_defect: f64,
    /// Largest eigenvalue of `(A + A*)/2`.
    pub max_eigenvalue: f64,
    /// `‖B - C*‖_F`; `None` when the shapes cannot match (`m ≠ p`).
    pub collocation_defect: Option<f64>,
    pub margin: f64,
}

/// Checks `A = A*`, `A ⪯ tol·I` and `B = C*`, each with a relative floor
/// `tol·max(1, ‖·‖)`.
pub fn internal_form_test(mode: &ModeTriple, tol: f64) -> InternalFormTest {
    let a = mode.a();
    let a_scale = a.norm().max(1.0);
    let hermitian_defect = linalg::hermitian_defect(a);
    let max_eigenvalue = linalg::hermitian_eigenvalues(a)
        .last()
        .copied()
        .unwrap_or(0.0);
    let c_adj = mode.c().adjoint();
    let collocation_defect = (c_adj.shape() == mode.b().shape()).then(|| (mode.b() - &c_adj).norm());
    let bc_scale = mode.b().norm().max(mode.c().norm()).max(1.0);
    let margin = [
        tol * a_scale - hermitian_defect,
        tol * a_scale - max_eigenvalue,
        collocation_defect.map_or(-1.0, |d| tol * bc_scale - d),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    InternalFormTest {
        passed: margin >= 0.0,
        hermitian_defect,
        max_eigenvalue,
        collocation_defect,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Pass,
    Fail,
    NotApplicable,
}

/// All per-mode tests for one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVerdict {
    pub omega: Vec<f64>,
    pub cm_by_bernstein: TriState,
    pub bernstein_margin: Option<f64>,
    pub bernstein_detail: Option<String>,
    pub cm_by_moments: MomentTest,
    pub internal_form: InternalFormTest,
    pub spectral_abscissa: f64,
}

pub fn analyze_mode(mode: &ModeTriple, tol: &Tolerances) -> Result<ModeVerdict> {
    let bern = cm_test_bernstein_with(mode, tol.psd, tol.condition_limit)?;
    let detail = match &bern.outcome {
        BernsteinOutcome::Pass(f) => Some(format!("{} pole(s)", f.poles.len())),
        BernsteinOutcome::Fail { reason } | BernsteinOutcome::NotApplicable { reason } => {
            Some(reason.clone())
        }
    };
    Ok(ModeVerdict {
        omega: mode.omega().to_vec(),
        cm_by_bernstein: bern.status(),
        bernstein_margin: bern.margin,
        bernstein_detail: detail,
        cm_by_moments: cm_test_moments(mode, tol.k_max, tol.moment)?,
        internal_form: internal_form_test(mode, tol.structure),
        spectral_abscissa: spectral_abscissa(mode)?,
    })
}
