//! Structured verdicts with per-mode evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "ltsi-relax/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Process exit code for a command whose outcome is this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Relaxation,
    InternalRelaxation,
    Passivity,
    ExponentialStability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Pass,
    Fail,
    NotApplicable,
    Inconclusive,
}

/// One pointwise check. `margin` is signed slack: nonnegative means the check
/// holds at its tolerance, negative means it is violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub omega: Vec<f64>,
    pub test: String,
    pub status: EvidenceStatus,
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Evidence {
    pub fn measured(omega: &[f64], test: &str, margin: f64) -> Self {
        Self {
            omega: omega.to_vec(),
            test: test.into(),
            status: if margin >= 0.0 {
                EvidenceStatus::Pass
            } else {
                EvidenceStatus::Fail
            },
            margin: Some(margin),
            detail: None,
        }
    }

    pub fn not_applicable(omega: &[f64], test: &str, why: impl Into<String>) -> Self {
        Self {
            omega: omega.to_vec(),
            test: test.into(),
            status: EvidenceStatus::NotApplicable,
            margin: None,
            detail: Some(why.into()),
        }
    }

    pub fn inconclusive(omega: &[f64], test: &str, why: impl Into<String>) -> Self {
        Self {
            omega: omega.to_vec(),
            test: test.into(),
            status: EvidenceStatus::Inconclusive,
            margin: None,
            detail: Some(why.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// Every threshold used by the analyses. Names match `--tol name=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative floor for PSD checks of Hankel matrices and residues.
    pub psd: f64,
    /// Floor for the moment-sign test.
    pub moment: f64,
    /// Structural checks of internal relaxation (`A = A*`, `A ⪯ 0`, `B = C*`).
    pub structure: f64,
    /// Passivity certificate conditions.
    pub passivity: f64,
    pub k_max: usize,
    /// Modes with spectral abscissa above `-marginal_abscissa` are marginal.
    pub marginal_abscissa: f64,
    /// Modes with `|abscissa|` below this are excluded from Hankel tests.
    pub hankel_marginal: f64,
    /// Eigenvector condition number above which the Bernstein test is not applicable.
    pub condition_limit: f64,
    /// Tail mass neglected by the truncated time quadrature.
    pub tail_eps: f64,
    /// Relative agreement required by the storage identity check.
    pub storage_rel: f64,
    /// Boundary/peak Hankel norm ratio that triggers a truncation warning.
    pub tail_warning: f64,
    /// Boundary/median `‖Q‖` ratio that triggers a growth warning.
    pub growth_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: 1e-9,
            moment: 1e-9,
            structure: 1e-9,
            passivity: 1e-9,
            k_max: 20,
            marginal_abscissa: 1e-12,
            hankel_marginal: 1e-6,
            condition_limit: 1e8,
            tail_eps: 1e-10,
            storage_rel: 1e-4,
            tail_warning: 1e-6,
            growth_factor: 10.0,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let parse = |v: &str| -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("tolerance {name}: '{v}' is not a number")))?;
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Parse(format!("tolerance {name} must be positive")));
            }
            Ok(x)
        };
        match name {
            "psd" => self.psd = parse(value)?,
            "moment" => self.moment = parse(value)?,
            "structure" => self.structure = parse(value)?,
            "passivity" => self.passivity = parse(value)?,
            "k_max" => {
                self.k_max = value
                    .parse()
                    .map_err(|_| Error::Parse(format!("k_max: '{value}' is not an integer")))?
            }
            "marginal_abscissa" => self.marginal_abscissa = parse(value)?,
            "hankel_marginal" => self.hankel_marginal = parse(value)?,
            "condition_limit" => self.condition_limit = parse(value)?,
            "tail_eps" => self.tail_eps = parse(value)?,
            "storage_rel" => self.storage_rel = parse(value)?,
            "tail_warning" => self.tail_warning = parse(value)?,
            "growth_factor" => self.growth_factor = parse(value)?,
            other => return Err(Error::Parse(format!("unknown tolerance '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: String,
    pub property: Property,
    pub verdict: Verdict,
    pub worst_margin: Option<f64>,
    pub tolerances: Tolerances,
    pub per_mode_evidence: Vec<Evidence>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Certificate {
    /// Derives the verdict from the evidence: any failing entry fails the
    /// certificate, otherwise any inconclusive entry (or no evidence at all)
    /// makes it inconclusive.
    pub fn from_evidence(
        property: Property,
        evidence: Vec<Evidence>,
        tolerances: Tolerances,
        notes: Vec<String>,
    ) -> Self {
        let any = |s| evidence.iter().any(|e| e.status == s);
        let verdict = if any(EvidenceStatus::Fail) {
            Verdict::Fail
        } else if evidence.is_empty() || any(EvidenceStatus::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        let worst_margin = evidence
            .iter()
            .filter_map(|e| e.margin)
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))));
        Self {
            schema: SCHEMA_VERSION.into(),
            property,
            verdict,
            worst_margin,
            tolerances,
            per_mode_evidence: evidence,
            notes,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Evidence> {
        self.per_mode_evidence
            .iter()
            .filter(|e| e.status == EvidenceStatus::Fail)
    }
}
