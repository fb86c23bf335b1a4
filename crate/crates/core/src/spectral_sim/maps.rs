//! Extended controllability and observability maps, the storage identity
//! `‖z(0)‖² = ∫₀^∞ ⟨u(-t), y(t)⟩ dt = 2ℌ(ū)`, and single-mode trajectories
//! with their exact supplied energy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModePropagator;
use crate::certificate::Tolerances;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::hankel::{build_quadrature_with, hankel_matrix, QuadratureScheme, TimeQuadrature};
use crate::linalg::{self, CMat, CVec, C64};
use crate::lti_mode::{internal_form_test, spectral_abscissa};
use crate::symbol::{evaluate_symbol, ModeTriple, SymbolFamily};

fn require_stable(mode: &ModeTriple) -> Result<f64> {
    let abscissa = spectral_abscissa(mode)?;
    if abscissa >= 0.0 {
        return Err(Error::NotStable {
            omega: mode.omega().to_vec(),
            abscissa,
        });
    }
    Ok(abscissa)
}

fn check_profile(mode: &ModeTriple, quad: &TimeQuadrature, v: &[C64]) -> Result<()> {
    let expect = quad.len() * mode.m();
    if v.len() != expect {
        return Err(Error::Validation(format!(
            "mode {:?}: past input has length {}, expected {expect} (nodes x channels)",
            mode.omega(),
            v.len()
        )));
    }
    Ok(())
}

/// `[√w_1 e^{At_1}B, …, √w_N e^{At_N}B]` (n × Nm).
pub fn controllability_matrix(mode: &ModeTriple, quad: &TimeQuadrature) -> Result<CMat> {
    let (n, m) = (mode.n(), mode.m());
    let mut out = CMat::zeros(n, quad.len() * m);
    for (j, (t, w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let blk = linalg::expm(&mode.a().scale(*t)) * mode.b() * linalg::c(w.sqrt());
        out.view_mut((0, j * m), (n, m)).copy_from(&blk);
    }
    Ok(out)
}

/// `[√w_1 Ce^{At_1}; …; √w_N Ce^{At_N}]` (Np × n).
pub fn observability_matrix(mode: &ModeTriple, quad: &TimeQuadrature) -> Result<CMat> {
    let (n, p) = (mode.n(), mode.p());
    let mut out = CMat::zeros(quad.len() * p, n);
    for (i, (t, w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let blk = mode.c() * linalg::expm(&mode.a().scale(*t)) * linalg::c(w.sqrt());
        out.view_mut((i * p, 0), (p, n)).copy_from(&blk);
    }
    Ok(out)
}

fn controllability_mode(mode: &ModeTriple, quad: &TimeQuadrature, v: &[C64]) -> Result<CVec> {
    check_profile(mode, quad, v)?;
    let m = mode.m();
    let mut z = CVec::zeros(mode.n());
    for (j, (t, w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let vj = CVec::from_column_slice(&v[j * m..(j + 1) * m]);
        if vj.iter().all(|x| *x == C64::new(0.0, 0.0)) {
            continue;
        }
        z += linalg::expm(&mode.a().scale(*t)) * (mode.b() * vj) * linalg::c(*w);
    }
    Ok(z)
}

/// `ẑ_ω(0) = Σ_j w_j e^{A_ω t_j} B_ω v̂_ω(t_j)` for every grid mode; `v[k]` is
/// node-major, channel-minor.
pub fn controllability_map(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    quad: &TimeQuadrature,
    v: &[Vec<C64>],
) -> Result<Vec<CVec>> {
    if v.len() != grid.len() {
        return Err(Error::Validation(format!(
            "expected {} per-mode past inputs, got {}",
            grid.len(),
            v.len()
        )));
    }
    grid.points()
        .par_iter()
        .zip(v.par_iter())
        .map(|(omega, vk)| {
            let mode = evaluate_symbol(family, omega)?;
            require_stable(&mode)?;
            controllability_mode(&mode, quad, vk)
        })
        .collect()
}

/// `ŷ_ω(t) = C_ω e^{A_ω t} ẑ_ω(0)` for every grid mode.
pub fn observability_output(family: &SymbolFamily, grid: &FrequencyGrid, z0: &[CVec], t: f64) -> Result<Vec<CVec>> {
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("time must be nonnegative, got {t}")));
    }
    if z0.len() != grid.len() {
        return Err(Error::Validation(format!("expected {} per-mode states, got {}", grid.len(), z0.len())));
    }
    grid.points()
        .par_iter()
        .zip(z0.par_iter())
        .map(|(omega, z)| {
            let mode = evaluate_symbol(family, omega)?;
            if z.len() != mode.n() {
                return Err(Error::Validation(format!("state at {omega:?} has the wrong length")));
            }
            Ok(mode.c() * linalg::expm(&mode.a().scale(t)) * z)
        })
        .collect()
}

/// `C e^{A t_i} z` at every quadrature node, node-major and channel-minor.
pub fn observability_samples(mode: &ModeTriple, quad: &TimeQuadrature, z: &CVec) -> Vec<C64> {
    quad.nodes()
        .iter()
        .flat_map(|t| (mode.c() * linalg::expm(&mode.a().scale(*t)) * z).iter().copied().collect::<Vec<_>>())
        .collect()
}

/// Time profile of a past input `v(τ) = u(-τ)`, `τ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TemporalProfile {
    Zero,
    /// `e^{-rate·τ}`.
    Exponential { rate: f64 },
    /// `e^{-(τ - center)²/(2 width²)}`.
    Gaussian { center: f64, width: f64 },
}

impl TemporalProfile {
    pub fn eval(&self, tau: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Exponential { rate } => (-rate * tau).exp(),
            Self::Gaussian { center, width } => (-(tau - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }
}

/// Spatial Fourier amplitude of the past input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialProfile {
    /// Amplitude one at every frequency.
    #[default]
    Flat,
    /// `e^{-σ²|ω|²/2}`, the transform of a Gaussian of width σ.
    Gaussian { sigma: f64 },
}

impl SpatialProfile {
    pub fn eval(&self, omega: &[f64]) -> f64 {
        match *self {
            Self::Flat => 1.0,
            Self::Gaussian { sigma } => {
                let r2: f64 = omega.iter().map(|w| w * w).sum();
                (-0.5 * sigma * sigma * r2).exp()
            }
        }
    }
}

/// Separable past input `v̂_ω(τ) = spatial(ω)·temporal(τ)` on every channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PastInput {
    pub temporal: TemporalProfile,
    #[serde(default)]
    pub spatial: SpatialProfile,
}

impl PastInput {
    pub fn zero() -> Self {
        Self {
            temporal: TemporalProfile::Zero,
            spatial: SpatialProfile::Flat,
        }
    }

    pub fn exponential(rate: f64) -> Self {
        Self {
            temporal: TemporalProfile::Exponential { rate },
            spatial: SpatialProfile::Flat,
        }
    }

    pub fn gaussian(center: f64, width: f64) -> Self {
        Self {
            temporal: TemporalProfile::Gaussian { center, width },
            spatial: SpatialProfile::Flat,
        }
    }

    pub fn with_spatial(mut self, spatial: SpatialProfile) -> Self {
        self.spatial = spatial;
        self
    }

    /// Samples at the quadrature nodes, node-major and channel-minor.
    pub fn sample(&self, omega: &[f64], quad: &TimeQuadrature, channels: usize) -> Vec<C64> {
        let a = self.spatial.eval(omega);
        quad.nodes()
            .iter()
            .flat_map(|t| std::iter::repeat_n(linalg::c(a * self.temporal.eval(*t)), channels))
            .collect()
    }
}

/// Which time quadrature each mode uses.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadratureAssignment {
    Shared(TimeQuadrature),
    /// Built per mode from its decay rate `-abscissa`.
    PerMode { scheme: QuadratureScheme, nodes: usize },
}

impl QuadratureAssignment {
    fn for_mode(&self, decay: f64, tail_eps: f64) -> Result<TimeQuadrature> {
        match self {
            Self::Shared(q) => Ok(q.clone()),
            Self::PerMode { scheme, nodes } => build_quadrature_with(*scheme, *nodes, decay, tail_eps),
        }
    }
}

/// The three storage quantities and their pairwise relative differences
/// `(lhs-rhs, lhs-hankel, rhs-hankel)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageQuantities {
    /// `‖z(0)‖²`.
    pub lhs: f64,
    /// `Re ∫₀^∞ ⟨u(-t), y(t)⟩ dt`.
    pub rhs: f64,
    /// `2ℌ(ū) = Re⟨ℋū, ū⟩`.
    pub hankel_form: f64,
    pub rel_errors: [f64; 3],
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

impl StorageQuantities {
    pub fn new(lhs: f64, rhs: f64, hankel_form: f64) -> Self {
        Self {
            lhs,
            rhs,
            hankel_form,
            rel_errors: [rel_diff(lhs, rhs), rel_diff(lhs, hankel_form), rel_diff(rhs, hankel_form)],
        }
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStorage {
    pub omega: Vec<f64>,
    /// `None` when the mode is excluded (see `excluded`).
    pub quantities: Option<StorageQuantities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub per_mode: Vec<ModeStorage>,
    /// Plancherel sums `Σ_k W_k (·)_k` over the included modes.
    pub aggregate: StorageQuantities,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when some mode was excluded, so the aggregate is not the full sum.
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

/// All three storage quantities for one mode with past input samples `v`.
pub fn storage_identity_mode(mode: &ModeTriple, quad: &TimeQuadrature, v: &[C64]) -> Result<StorageQuantities> {
    mode.require_square_transfer()?;
    check_profile(mode, quad, v)?;
    let m = mode.m();
    let z0 = controllability_mode(mode, quad, v)?;
    let lhs = z0.norm_squared();

    let y = observability_samples(mode, quad, &z0);
    let mut rhs = C64::new(0.0, 0.0);
    for (j, w) in quad.weights().iter().enumerate() {
        for ch in 0..m {
            rhs += v[j * m + ch] * y[j * m + ch].conj() * *w;
        }
    }

    let h = hankel_matrix(mode, quad)?;
    let sw: Vec<f64> = quad
        .weights()
        .iter()
        .flat_map(|w| std::iter::repeat_n(w.sqrt(), m))
        .collect();
    let x = CVec::from_iterator(v.len(), v.iter().zip(&sw).map(|(a, s)| a * s));
    let hankel_form = (&h * &x).dotc(&x).re;
    Ok(StorageQuantities::new(lhs, rhs.re, hankel_form))
}

/// Checks the storage identity on every grid mode and on the Plancherel
/// aggregate. The family must be internally of relaxation type; modes with
/// `|abscissa| < tolerances.hankel_marginal` are excluded and reported.
pub fn storage_identity_check(
    family: &SymbolFamily,
    grid: &FrequencyGrid,
    quads: &QuadratureAssignment,
    past: &PastInput,
    tolerances: &Tolerances,
) -> Result<StorageReport> {
    let per_mode: Vec<ModeStorage> = grid
        .points()
        .par_iter()
        .map(|omega| {
            let mode = evaluate_symbol(family, omega)?;
            let form = internal_form_test(&mode, tolerances.structure);
            if !form.passed {
                return Err(Error::InternalForm {
                    omega: omega.clone(),
                    detail: "the storage identity needs A = A* <= 0 and B = C*".into(),
                });
            }
            let abscissa = spectral_abscissa(&mode)?;
            if abscissa > -tolerances.hankel_marginal {
                return Ok(ModeStorage {
                    omega: omega.clone(),
                    quantities: None,
                    excluded: Some(format!("marginal mode (abscissa {abscissa:e}) excluded")),
                });
            }
            let quad = quads.for_mode(-abscissa, tolerances.tail_eps)?;
            let v = past.sample(omega, &quad, mode.m());
            Ok(ModeStorage {
                omega: omega.clone(),
                quantities: Some(storage_identity_mode(&mode, &quad, &v)?),
                excluded: None,
            })
        })
        .collect::<Result<_>>()?;

    let (mut lhs, mut rhs, mut hk) = (0.0, 0.0, 0.0);
    for (ms, w) in per_mode.iter().zip(grid.weights()) {
        if let Some(q) = &ms.quantities {
            lhs += w * q.lhs;
            rhs += w * q.rhs;
            hk += w * q.hankel_form;
        }
    }
    let aggregate = StorageQuantities::new(lhs, rhs, hk);
    let max_rel_error = per_mode
        .iter()
        .filter_map(|m| m.quantities.map(|q| q.max_rel_error()))
        .fold(aggregate.max_rel_error(), f64::max);
    let excluded = per_mode.iter().filter(|m| m.excluded.is_some()).count();
    let mut notes = Vec::new();
    if excluded > 0 {
        notes.push(format!("{excluded} marginal mode(s) excluded from the aggregate"));
    }
    let tolerance = tolerances.storage_rel;
    Ok(StorageReport {
        per_mode,
        aggregate,
        max_rel_error,
        tolerance,
        passed: max_rel_error <= tolerance,
        inconclusive: excluded > 0,
        notes,
    })
}

/// States and exactly integrated supply `∫ 2Re⟨u, y⟩ dt` of one step each,
/// for a piecewise-constant input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    /// `states[0]` is the initial state; one more entry per step.
    pub states: Vec<CVec>,
    pub supply: Vec<f64>,
}

/// Steps one mode under piecewise-constant inputs `inputs[i]` on
/// `[i·dt, (i+1)·dt)`. On a step, `∫ y dt = C(Γ₀ z + Γ₁ B u)`, so the supply is
/// integrated exactly.
pub fn simulate_mode_trajectory(mode: &ModeTriple, z0: &CVec, inputs: &[CVec], dt: f64) -> Result<ModeTrajectory> {
    if z0.len() != mode.n() {
        return Err(Error::Validation("initial state has the wrong length".into()));
    }
    let prop = ModePropagator::new(mode.a(), dt)?;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut supply = Vec::with_capacity(inputs.len());
    states.push(z0.clone());
    for u in inputs {
        if u.len() != mode.m() {
            return Err(Error::Validation("input has the wrong number of channels".into()));
        }
        let z = states.last().expect("nonempty");
        let bu = mode.b() * u;
        let y_int = mode.c() * (&prop.gamma0 * z + &prop.gamma1 * &bu);
        supply.push(2.0 * y_int.dotc(u).re);
        states.push(&prop.phi * z + &prop.gamma0 * bu);
    }
    Ok(ModeTrajectory { states, supply })
}
