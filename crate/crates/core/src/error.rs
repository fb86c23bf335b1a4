use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("omega {omega:?} lies outside the tabulated range [{lo:?}, {hi:?}]")]
    Extrapolation {
        omega: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },

    #[error("spatial dimension {0} is not supported here")]
    UnsupportedDimension(usize),

    #[error("matrix exponential overflowed (spectral abscissa {abscissa})")]
    Overflow { abscissa: f64 },

    #[error("transfer matrix is {p}x{m}, a square transfer (m = p) is required")]
    NonSquare { p: usize, m: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("mode at omega {omega:?} is not exponentially stable (spectral abscissa {abscissa})")]
    NotStable { omega: Vec<f64>, abscissa: f64 },

    #[error("cannot bound the quadrature horizon: decay rate {0} is not positive")]
    NonPositiveDecay(f64),

    #[error("internal relaxation violated at omega {omega:?}: {detail}")]
    InternalForm { omega: Vec<f64>, detail: String },

    #[error("B has rank {rank} < {cols} columns, the storage constraint C = B*Q is underdetermined")]
    RankDeficient { rank: usize, cols: usize },

    #[error("certificate inconsistent: {0}")]
    CertificateInconsistent(String),

    #[error("no certificate entry for omega {0:?}")]
    MissingMode(Vec<f64>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
