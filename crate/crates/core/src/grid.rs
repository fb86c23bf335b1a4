use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest spatial dimension for which tensor-product grids are built.
pub const MAX_GRID_DIMENSION: usize = 3;

/// Frequency sample points with quadrature weights for `∫ · dω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct FrequencyGrid {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct GridRepr {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for FrequencyGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Self::new(r.points, r.weights)
    }
}

impl FrequencyGrid {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Validation(format!(
                "grid needs matching nonempty points/weights, got {} and {}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Validation("grid weights must be positive".into()));
        }
        let s = points[0].len();
        if points.iter().any(|p| p.len() != s || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Validation("grid points must be finite with equal length".into()));
        }
        let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("grid points must be pairwise distinct".into()));
        }
        Ok(Self { points, weights })
    }

    /// A single point with unit weight.
    pub fn single(omega: Vec<f64>) -> Self {
        Self {
            points: vec![omega],
            weights: vec![1.0],
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }
}

/// Uniform symmetric grid on `[-omega_max, omega_max]^s` with trapezoidal
/// weights. For `s > 1` the grid is the tensor product, ordered
/// lexicographically.
pub fn make_frequency_grid(omega_max: f64, count: usize, s: usize) -> Result<FrequencyGrid> {
    if !(omega_max.is_finite() && omega_max > 0.0) {
        return Err(Error::Validation(format!("omega_max must be positive, got {omega_max}")));
    }
    if count < 2 {
        return Err(Error::Validation(format!("count must be at least 2, got {count}")));
    }
    if s == 0 || s > MAX_GRID_DIMENSION {
        return Err(Error::UnsupportedDimension(s));
    }
    let h = 2.0 * omega_max / (count - 1) as f64;
    // Mirror the upper half so the grid is exactly symmetric.
    let axis: Vec<f64> = (0..count)
        .map(|i| {
            let j = count - 1 - i;
            if i == j {
                0.0
            } else if i < j {
                -omega_max + i as f64 * h
            } else {
                omega_max - j as f64 * h
            }
        })
        .collect();
    let axis_w: Vec<f64> = (0..count)
        .map(|i| if i == 0 || i == count - 1 { 0.5 * h } else { h })
        .collect();

    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for _ in 0..s {
        let mut np = Vec::with_capacity(points.len() * count);
        let mut nw = Vec::with_capacity(points.len() * count);
        for (p, w) in points.iter().zip(&weights) {
            for (x, wx) in axis.iter().zip(&axis_w) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * wx);
            }
        }
        points = np;
        weights = nw;
    }
    FrequencyGrid::new(points, weights)
}
