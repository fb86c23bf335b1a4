//! Frequency-domain representation of an LTSI system.
//!
//! A [`SymbolFamily`] maps a spatial frequency `ω` to the matrices
//! `(A_ω, B_ω, C_ω)` of the LTI system obtained by Fourier transforming the
//! spatially invariant dynamics. Builtin families are parametric; tabulated
//! families interpolate linearly between samples.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::json::cmat;
use crate::linalg::{c, is_finite, CMat, C64};

/// The matrices `(A, B, C)` of one frequency-indexed LTI system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTriple {
    a: CMat,
    b: CMat,
    c: CMat,
    omega: Vec<f64>,
}

impl ModeTriple {
    pub fn new(a: CMat, b: CMat, c: CMat, omega: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Validation(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Validation(format!(
                "B must have {n} rows and at least one column, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Validation(format!(
                "C must have {n} columns and at least one row, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if !(is_finite(&a) && is_finite(&b) && is_finite(&c)) || omega.iter().any(|w| !w.is_finite())
        {
            return Err(Error::Validation("mode contains non-finite entries".into()));
        }
        Ok(Self { a, b, c, omega })
    }

    /// Convenience constructor from real row slices, at `ω = 0`.
    pub fn from_real(a: &[&[f64]], b: &[&[f64]], c: &[&[f64]]) -> Result<Self> {
        use crate::linalg::real_matrix;
        Self::new(real_matrix(a), real_matrix(b), real_matrix(c), vec![0.0])
    }

    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        self.omega = omega;
        self
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn c(&self) -> &CMat {
        &self.c
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn require_square_transfer(&self) -> Result<()> {
        if self.m() != self.p() {
            return Err(Error::NonSquare {
                p: self.p(),
                m: self.m(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
}

/// One term `residue · e^{-(offset + curvature·|ω|²) t}` of a diagonal-exponential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub offset: f64,
    #[serde(default)]
    pub curvature: f64,
    pub residue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSample {
    pub omega: Vec<f64>,
    #[serde(rename = "A", with = "cmat")]
    pub a: CMat,
    #[serde(rename = "B", with = "cmat")]
    pub b: CMat,
    #[serde(rename = "C", with = "cmat")]
    pub c: CMat,
}

impl From<&ModeTriple> for TabulatedSample {
    fn from(m: &ModeTriple) -> Self {
        Self {
            omega: m.omega.clone(),
            a: m.a.clone(),
            b: m.b.clone(),
            c: m.c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `A = -α|ω|²`, `B = C = 1`.
    Diffusion { alpha: f64 },
    /// `A = -α|ω|² - κ`, `B = C = 1`.
    ShiftedDiffusion { alpha: f64, kappa: f64 },
    /// Second-order oscillator with natural frequency `sqrt(ω₀² + |ω|²)`,
    /// observed through its velocity. Not a relaxation system for `ζ < 1/2`.
    DampedOscillator { zeta: f64, omega0: f64 },
    /// `A = diag(-p_i(ω))`, `B_i = sqrt|r_i|`, `C_i = sign(r_i)·sqrt|r_i|`.
    DiagonalExponential { terms: Vec<ExpTerm> },
    Tabulated { samples: Vec<TabulatedSample> },
}

impl FamilyKind {
    fn natural_dims(&self, s: usize) -> Dims {
        match self {
            FamilyKind::Diffusion { .. } | FamilyKind::ShiftedDiffusion { .. } => {
                Dims { n: 1, m: 1, p: 1, s }
            }
            FamilyKind::DampedOscillator { .. } => Dims { n: 2, m: 1, p: 1, s },
            FamilyKind::DiagonalExponential { terms } => Dims {
                n: terms.len(),
                m: 1,
                p: 1,
                s,
            },
            FamilyKind::Tabulated { samples } => match samples.first() {
                Some(f) => Dims {
                    n: f.a.nrows(),
                    m: f.b.ncols(),
                    p: f.c.nrows(),
                    s: f.omega.len(),
                },
                None => Dims { n: 0, m: 0, p: 0, s },
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Diffusion { .. } => "diffusion",
            FamilyKind::ShiftedDiffusion { .. } => "shifted-diffusion",
            FamilyKind::DampedOscillator { .. } => "damped-oscillator",
            FamilyKind::DiagonalExponential { .. } => "diagonal-exponential",
            FamilyKind::Tabulated { .. } => "tabulated",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FamilyRepr {
    #[serde(flatten)]
    kind: FamilyKind,
    #[serde(default)]
    dims: Option<Dims>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    continuity_note: String,
}

/// Parametric or tabulated map `ω ↦ ModeTriple`.
///
/// Construction never fails; use [`validate_family`] to check invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FamilyRepr", into = "FamilyRepr")]
pub struct SymbolFamily {
    pub kind: FamilyKind,
    pub dims: Dims,
    pub continuity_note: String,
}

impl From<FamilyRepr> for SymbolFamily {
    fn from(r: FamilyRepr) -> Self {
        let dims = r.dims.unwrap_or_else(|| r.kind.natural_dims(1));
        Self {
            kind: r.kind,
            dims,
            continuity_note: r.continuity_note,
        }
    }
}

impl From<SymbolFamily> for FamilyRepr {
    fn from(f: SymbolFamily) -> Self {
        Self {
            kind: f.kind,
            dims: Some(f.dims),
            continuity_note: f.continuity_note,
        }
    }
}

impl SymbolFamily {
    pub fn new(kind: FamilyKind) -> Self {
        let dims = kind.natural_dims(1);
        let continuity_note = match &kind {
            FamilyKind::Tabulated { .. } => "piecewise-linear interpolation between samples",
            _ => "analytic in omega",
        }
        .to_string();
        Self {
            kind,
            dims,
            continuity_note,
        }
    }

    pub fn diffusion(alpha: f64) -> Self {
        Self::new(FamilyKind::Diffusion { alpha })
    }

    pub fn shifted_diffusion(alpha: f64, kappa: f64) -> Self {
        Self::new(FamilyKind::ShiftedDiffusion { alpha, kappa })
    }

    pub fn damped_oscillator(zeta: f64, omega0: f64) -> Self {
        Self::new(FamilyKind::DampedOscillator { zeta, omega0 })
    }

    pub fn diagonal_exponential(terms: Vec<ExpTerm>) -> Self {
        Self::new(FamilyKind::DiagonalExponential { terms })
    }

    pub fn tabulated(samples: Vec<TabulatedSample>) -> Self {
        Self::new(FamilyKind::Tabulated { samples })
    }

    /// Samples this family on every grid point.
    pub fn tabulate(&self, grid: &FrequencyGrid) -> Result<Self> {
        let samples = grid
            .points()
            .iter()
            .map(|w| evaluate_symbol(self, w).map(|m| TabulatedSample::from(&m)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::tabulated(samples))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn lexicographic_lt(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn interpolate(lo: &TabulatedSample, hi: &TabulatedSample, theta: f64) -> (CMat, CMat, CMat) {
    let mix = |x: &CMat, y: &CMat| x.scale(1.0 - theta) + y.scale(theta);
    (mix(&lo.a, &hi.a), mix(&lo.b, &hi.b), mix(&lo.c, &hi.c))
}

/// Evaluates the family at `ω`.
pub fn evaluate_symbol(family: &SymbolFamily, omega: &[f64]) -> Result<ModeTriple> {
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::Validation(format!("omega {omega:?} is not finite")));
    }
    if omega.len() != family.dims.s {
        return Err(Error::Validation(format!(
            "omega has length {}, family has spatial dimension {}",
            omega.len(),
            family.dims.s
        )));
    }
    let r2: f64 = omega.iter().map(|w| w * w).sum();
    let w = omega.to_vec();
    let scalar = |a: f64| {
        ModeTriple::new(
            CMat::from_element(1, 1, c(a)),
            CMat::from_element(1, 1, c(1.0)),
            CMat::from_element(1, 1, c(1.0)),
            w.clone(),
        )
    };
    match &family.kind {
        FamilyKind::Diffusion { alpha } => scalar(-alpha * r2),
        FamilyKind::ShiftedDiffusion { alpha, kappa } => scalar(-alpha * r2 - kappa),
        FamilyKind::DampedOscillator { zeta, omega0 } => {
            let wn2 = omega0 * omega0 + r2;
            let wn = wn2.sqrt();
            let a = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(-wn2), c(-2.0 * zeta * wn)]);
            let b = CMat::from_column_slice(2, 1, &[c(0.0), c(1.0)]);
            let cm = CMat::from_row_slice(1, 2, &[c(0.0), c(1.0)]);
            ModeTriple::new(a, b, cm, w)
        }
        FamilyKind::DiagonalExponential { terms } => {
            let n = terms.len();
            let a = CMat::from_fn(n, n, |i, j| {
                if i == j {
                    c(-(terms[i].offset + terms[i].curvature * r2))
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let b = CMat::from_fn(n, 1, |i, _| c(terms[i].residue.abs().sqrt()));
            let cm = CMat::from_fn(1, n, |_, j| {
                let r = terms[j].residue;
                c(r.signum() * r.abs().sqrt())
            });
            ModeTriple::new(a, b, cm, w)
        }
        FamilyKind::Tabulated { samples } => evaluate_tabulated(samples, family.dims.s, omega),
    }
}

fn evaluate_tabulated(samples: &[TabulatedSample], s: usize, omega: &[f64]) -> Result<ModeTriple> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Validation("tabulated family has no samples".into())),
    };
    let build = |a: CMat, b: CMat, cm: CMat| ModeTriple::new(a, b, cm, omega.to_vec());
    if let Some(hit) = samples.iter().find(|x| x.omega == omega) {
        return build(hit.a.clone(), hit.b.clone(), hit.c.clone());
    }
    if s != 1 {
        return Err(Error::UnsupportedDimension(s));
    }
    let q = omega[0];
    if q < first.omega[0] || q > last.omega[0] {
        return Err(Error::Extrapolation {
            omega: omega.to_vec(),
            lo: first.omega.clone(),
            hi: last.omega.clone(),
        });
    }
    let i = samples.partition_point(|x| x.omega[0] <= q);
    let (lo, hi) = (&samples[i - 1], &samples[i]);
    if lo.a.shape() != hi.a.shape() || lo.b.shape() != hi.b.shape() || lo.c.shape() != hi.c.shape()
    {
        return Err(Error::Validation(format!(
            "samples at {:?} and {:?} have different shapes",
            lo.omega, hi.omega
        )));
    }
    let theta = (q - lo.omega[0]) / (hi.omega[0] - lo.omega[0]);
    let (a, b, cm) = interpolate(lo, hi, theta);
    build(a, b, cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingClass {
    DimensionMismatch,
    NonFinite,
    Unsorted,
    InvalidParameter,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub class: FindingClass,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.class, self.location, self.message)
    }
}

fn finding(class: FindingClass, location: impl Into<String>, message: impl Into<String>) -> Finding {
    Finding {
        class,
        location: location.into(),
        message: message.into(),
    }
}

/// Checks every `SymbolFamily` invariant; empty iff the family is well formed.
pub fn validate_family(family: &SymbolFamily) -> Vec<Finding> {
    use FindingClass::*;
    let mut out = Vec::new();
    let dims = family.dims;
    if dims.s == 0 {
        out.push(finding(InvalidParameter, "dims.s", "spatial dimension must be at least 1"));
    }
    let mut param = |name: &str, v: f64, ok: bool, req: &str| {
        if !v.is_finite() {
            out.push(finding(NonFinite, name, format!("{name} = {v}")));
        } else if !ok {
            out.push(finding(InvalidParameter, name, format!("{name} = {v}, expected {req}")));
        }
    };
    match &family.kind {
        FamilyKind::Diffusion { alpha } => param("alpha", *alpha, *alpha > 0.0, "> 0"),
        FamilyKind::ShiftedDiffusion { alpha, kappa } => {
            param("alpha", *alpha, *alpha > 0.0, "> 0");
            param("kappa", *kappa, *kappa >= 0.0, ">= 0");
        }
        FamilyKind::DampedOscillator { zeta, omega0 } => {
            param("zeta", *zeta, *zeta >= 0.0, ">= 0");
            param("omega0", *omega0, *omega0 > 0.0, "> 0");
        }
        FamilyKind::DiagonalExponential { terms } => {
            for (i, t) in terms.iter().enumerate() {
                param(&format!("terms[{i}].offset"), t.offset, true, "");
                param(&format!("terms[{i}].curvature"), t.curvature, true, "");
                param(&format!("terms[{i}].residue"), t.residue, true, "");
            }
        }
        FamilyKind::Tabulated { .. } => {}
    }
    match &family.kind {
        FamilyKind::Tabulated { samples } => validate_samples(samples, dims, &mut out),
        FamilyKind::DiagonalExponential { terms } if terms.is_empty() => {
            out.push(finding(Empty, "terms", "diagonal-exponential family has no terms"));
        }
        kind => {
            let natural = kind.natural_dims(dims.s);
            if natural != dims {
                out.push(finding(
                    DimensionMismatch,
                    "dims",
                    format!("declared {dims:?}, builtin {} has {natural:?}", kind.name()),
                ));
            }
        }
    }
    out
}

fn validate_samples(samples: &[TabulatedSample], dims: Dims, out: &mut Vec<Finding>) {
    use FindingClass::*;
    if samples.is_empty() {
        out.push(finding(Empty, "samples", "tabulated family has no samples"));
        return;
    }
    for (i, smp) in samples.iter().enumerate() {
        let loc = format!("samples[{i}]");
        let finite = smp.omega.iter().all(|w| w.is_finite())
            && is_finite(&smp.a)
            && is_finite(&smp.b)
            && is_finite(&smp.c);
        if !finite {
            out.push(finding(NonFinite, &loc, "sample contains NaN or infinite entries"));
        }
        let n = smp.a.nrows();
        let mut problems = Vec::new();
        if smp.omega.len() != dims.s {
            problems.push(format!("omega has length {}, expected {}", smp.omega.len(), dims.s));
        }
        if smp.a.ncols() != n {
            problems.push(format!("A is {}x{}, not square", n, smp.a.ncols()));
        }
        if smp.b.nrows() != n {
            problems.push(format!("B has {} rows, A has {}", smp.b.nrows(), n));
        }
        if smp.c.ncols() != n {
            problems.push(format!("C has {} columns, A has {}", smp.c.ncols(), n));
        }
        let got = (n, smp.b.ncols(), smp.c.nrows());
        if got != (dims.n, dims.m, dims.p) {
            problems.push(format!(
                "(n, m, p) = {got:?}, family declares ({}, {}, {})",
                dims.n, dims.m, dims.p
            ));
        }
        if !problems.is_empty() {
            out.push(finding(DimensionMismatch, &loc, problems.join("; ")));
        }
        if i > 0 {
            let prev = &samples[i - 1].omega;
            if prev.len() == smp.omega.len() && !lexicographic_lt(prev, &smp.omega) {
                out.push(finding(
                    Unsorted,
                    &loc,
                    format!("omega {:?} does not follow {:?}", smp.omega, prev),
                ));
            }
        }
    }
}
