//! Family-level certification: runs the per-mode tests on a frequency grid
//! and aggregates them into certificates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Evidence, Property, Tolerances};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::hankel::{build_hankel, build_quadrature_with, hankel_psd_test, HankelDiscretization, HankelTest, QuadratureScheme};
use crate::lti_mode::{analyze_mode, ModeVerdict, TriState};
use crate::symbol::{evaluate_symbol, SymbolFamily};

/// Time quadrature used for the per-mode Hankel discretizations; each mode
/// scales it by its own decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::TruncatedTrapezoid,
            nodes: 128,
        }
    }
}

impl std::str::FromStr for QuadratureSpec {
    type Err = Error;

    /// `scheme,N`, e.g. `trapezoid,128` or `laguerre,64`.
    fn from_str(s: &str) -> Result<Self> {
        let (scheme, n) = s
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("quadrature spec '{s}' is not 'scheme,N'")))?;
        let nodes: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("quadrature node count '{n}' is not an integer")))?;
        if nodes < 2 {
            return Err(Error::Parse("quadrature needs at least 2 nodes".into()));
        }
        Ok(Self {
            scheme: scheme.trim().parse()?,
            nodes,
        })
    }
}

/// Hankel outcome for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HankelOutcome {
    Tested(HankelTest),
    /// `|abscissa|` below the marginal threshold.
    Excluded { reason: String },
    Unstable { abscissa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    #[serde(flatten)]
    pub verdict: ModeVerdict,
    pub hankel: HankelOutcome,
    /// `λ_min` with half the nodes minus `λ_min` at full resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hankel_refinement_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationAnalysis {
    pub relaxation: Certificate,
    pub internal_relaxation: Certificate,
    pub stability: Certificate,
    pub modes: Vec<ModeReport>,
}

impl RelaxationAnalysis {
    /// Index of the tested mode with the smallest Hankel margin.
    pub fn worst_hankel_mode(&self) -> Option<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match &m.hankel {
                HankelOutcome::Tested(t) => Some((i, t.margin)),
                _ => None,
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Hankel discretization of one grid mode with the quadrature scaled to its
/// decay rate.
pub fn mode_hankel(
    family: &SymbolFamily,
    omega: &[f64],
    quad: QuadratureSpec,
    tolerances: &Tolerances,
) -> Result<HankelDiscretization> {
    let mode = evaluate_symbol(family, omega)?;
    let abscissa = crate::lti_mode::spectral_abscissa(&mode)?;
    let q = build_quadrature_with(quad.scheme, quad.nodes, -abscissa, tolerances.tail_eps)?;
    build_hankel(&mode, &q)
}

fn analyze_grid_mode(
    family: &SymbolFamily,
    omega: &[f64],
    quad: QuadratureSpec,
    tolerances: &Tolerances,
) -> Result<ModeReport> {
    let mode = evaluate_symbol(family, omega)?;
    mode.require_square_transfer()?;
    let verdict = analyze_mode(&mode, tolerances)?;
    let abscissa = verdict.spectral_abscissa;
    let (hankel, delta) = if abscissa.abs() < tolerances.hankel_marginal {
        (
            HankelOutcome::Excluded {
                reason: format!("marginal mode (abscissa {abscissa:e}) excluded from the Hankel test"),
            },
            None,
        )
    } else if abscissa > 0.0 {
        (HankelOutcome::Unstable { abscissa }, None)
    } else {
        let build = |n: usize| -> Result<HankelDiscretization> {
            let q = build_quadrature_with(quad.scheme, n, -abscissa, tolerances.tail_eps)?;
            build_hankel(&mode, &q)
        };
        let disc = build(quad.nodes)?;
        let delta = if quad.nodes >= 4 {
            Some(build(quad.nodes / 2)?.min_eigenvalue - disc.min_eigenvalue)
        } else {
            None
        };
        (HankelOutcome::Tested(hankel_psd_test(&disc, tolerances.psd)), delta)
    };
    Ok(ModeReport {
        verdict,
        hankel,
        hankel_refinement_delta: delta,
    })
}

fn hankel_norm(r: &ModeReport) -> Option<f64> {
    match &r.hankel {
        HankelOutcome::Tested(t) => Some(t.max_eigenvalue.abs().max(t.min_eigenvalue.abs())),
        _ => None,
    }
}

/// Boundary-to-peak Hankel norm ratio check for frequency truncation.
fn tail_note(grid: &FrequencyGrid, modes: &[ModeReport], threshold: f64) -> Option<String> {
    let radius = |w: &[f64]| w.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let outer = grid.points().iter().map(|w| radius(w)).fold(0.0, f64::max);
    let peak = modes.iter().filter_map(hankel_norm).fold(0.0, f64::max);
    let boundary = modes
        .iter()
        .filter(|m| radius(&m.verdict.omega) >= outer * (1.0 - 1e-12))
        .filter_map(hankel_norm)
        .fold(0.0, f64::max);
    (peak > 0.0 && boundary > threshold * peak).then(|| {
        format!(
            "warning: boundary-mode Hankel norm is {:e} of the peak; the frequency truncation may be significant",
            boundary / peak
        )
    })
}

/// Relaxation (complete monotonicity on every grid mode), internal
/// relaxation, and exponential stability certificates for a family.
///
/// The relaxation verdict needs the moment screen and the Hankel test to pass
/// on every mode; a Bernstein failure is decisive, a Bernstein pass is
/// recorded as stronger evidence. Marginal modes make the verdict
/// inconclusive unless something fails.
pub fn certify_relaxation(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    quad: QuadratureSpec,
    tolerances: &Tolerances,
) -> Result<RelaxationAnalysis> {
    let modes: Vec<ModeReport> = grid
        .points()
        .par_iter()
        .map(|w| analyze_grid_mode(family, w, quad, tolerances))
        .collect::<Result<_>>()?;

    let mut relax = Vec::with_capacity(3 * modes.len());
    let mut internal = Vec::with_capacity(modes.len());
    let mut stability = Vec::with_capacity(modes.len());
    for r in &modes {
        let v = &r.verdict;
        let w = &v.omega;
        let mt = &v.cm_by_moments;
        let mut moments = Evidence::measured(w, "moments", mt.margin);
        if let (Some(k), Some(val)) = (mt.first_failing_k, mt.failing_value) {
            moments = moments.with_detail(format!("first failure at k = {k}, value {val}"));
        }
        relax.push(moments);
        relax.push(match v.cm_by_bernstein {
            TriState::NotApplicable => Evidence::not_applicable(
                w,
                "bernstein",
                v.bernstein_detail.clone().unwrap_or_default(),
            ),
            _ => {
                let e = Evidence::measured(w, "bernstein", v.bernstein_margin.unwrap_or(f64::NAN));
                match &v.bernstein_detail {
                    Some(d) => e.with_detail(d.clone()),
                    None => e,
                }
            }
        });
        relax.push(match &r.hankel {
            HankelOutcome::Tested(t) => Evidence::measured(w, "hankel-psd", t.margin).with_detail(format!(
                "lambda_min = {:e}, lambda_max = {:e}",
                t.min_eigenvalue, t.max_eigenvalue
            )),
            HankelOutcome::Excluded { reason } => Evidence::inconclusive(w, "hankel-psd", reason.clone()),
            HankelOutcome::Unstable { abscissa } => {
                Evidence::measured(w, "hankel-psd", -abscissa).with_detail("unstable mode")
            }
        });
        internal.push(Evidence::measured(w, "internal-form", v.internal_form.margin));
        let stab = -v.spectral_abscissa - tolerances.marginal_abscissa;
        stability.push(Evidence::measured(w, "spectral-abscissa", stab));
    }

    let mut notes = vec!["verdict covers the sampled grid modes only".to_string()];
    if let Some(n) = tail_note(grid, &modes, tolerances.tail_warning) {
        notes.push(n);
    }
    let worst_delta = modes
        .iter()
        .filter_map(|m| m.hankel_refinement_delta)
        .map(f64::abs)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    if let Some(d) = worst_delta {
        notes.push(format!(
            "largest |lambda_min(N/2) - lambda_min(N)| over modes: {d:e} (N = {})",
            quad.nodes
        ));
    }
    Ok(RelaxationAnalysis {
        relaxation: Certificate::from_evidence(Property::Relaxation, relax, tolerances.clone(), notes),
        internal_relaxation: Certificate::from_evidence(
            Property::InternalRelaxation,
            internal,
            tolerances.clone(),
            Vec::new(),
        ),
        stability: Certificate::from_evidence(Property::ExponentialStability, stability, tolerances.clone(), Vec::new()),
        modes,
    })
}

/// A certificate holding only the Hankel evidence.
pub fn certify_hankel(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    quad: QuadratureSpec,
    tolerances: &Tolerances,
) -> Result<RelaxationAnalysis> {
    let mut a = certify_relaxation(family, grid, quad, tolerances)?;
    let evidence = a
        .relaxation
        .per_mode_evidence
        .iter()
        .filter(|e| e.test == "hankel-psd")
        .cloned()
        .collect();
    a.relaxation = Certificate::from_evidence(Property::Relaxation, evidence, tolerances.clone(), a.relaxation.notes.clone());
    Ok(a)
}
