//! Certification toolkit for relaxation-type linear time-and-space-invariant
//! (LTSI) systems.
//!
//! An LTSI system is described through its spatial Fourier symbol: one LTI
//! system `(A_ω, B_ω, C_ω)` per frequency. The crate checks complete
//! monotonicity of the per-mode impulse responses, positivity of discretized
//! Hankel operators, impedance-passivity certificates, and the identity
//! between stored energy and the memory of past inputs, using spectral
//! simulation and the heat equation as ground truth.

pub mod certificate;
pub mod certify;
pub mod cli;
pub mod diffusion_ref;
pub mod error;
pub mod grid;
pub mod json;
pub mod linalg;
pub mod hankel;
pub mod lti_mode;
pub mod passivity;
pub mod spectral_sim;
pub mod symbol;

pub use certificate::{Certificate, Evidence, EvidenceStatus, Property, Tolerances, Verdict};
pub use certify::{certify_relaxation, QuadratureSpec, RelaxationAnalysis};
pub use error::{Error, Result};
pub use grid::{make_frequency_grid, FrequencyGrid};
pub use symbol::{evaluate_symbol, validate_family, Dims, ExpTerm, FamilyKind, ModeTriple, SymbolFamily, TabulatedSample};
