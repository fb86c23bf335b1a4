//! Closed forms for the one-dimensional diffusion equation `∂_t u = α ∂_x² u`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    alpha: f64,
}

impl DiffusionParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Validation(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `g(t, x) = (4παt)^{-1/2} e^{-x²/(4αt)}`.
pub fn heat_kernel(p: &DiffusionParams, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Validation(format!("heat kernel needs t > 0, got {t}")));
    }
    let a = p.alpha;
    Ok((4.0 * PI * a * t).powf(-0.5) * (-x * x / (4.0 * a * t)).exp())
}

/// `ĝ(t, ω) = e^{-αω²t}`.
pub fn spectral_kernel(p: &DiffusionParams, t: f64, omega: f64) -> f64 {
    (-p.alpha * omega * omega * t).exp()
}

/// Unit-mass Gaussian of variance `σ₀² + 2αt`: the solution started from a
/// Gaussian of variance `σ₀²`.
pub fn gaussian_solution(p: &DiffusionParams, sigma0: f64, t: f64, x: f64) -> f64 {
    let var = sigma0 * sigma0 + 2.0 * p.alpha * t;
    (2.0 * PI * var).powf(-0.5) * (-x * x / (2.0 * var)).exp()
}

/// Time at which `t ↦ g(t, x)` peaks: `x²/(2α)`.
pub fn peak_time(p: &DiffusionParams, x: f64) -> f64 {
    x * x / (2.0 * p.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureSpec {
    pub alpha: f64,
    /// Fixed times of the spatial profiles.
    pub times: Vec<f64>,
    /// Fixed locations of the temporal curves.
    pub locations: Vec<f64>,
    pub x_range: (f64, f64),
    pub x_points: usize,
    pub t_range: (f64, f64),
    pub t_points: usize,
}

impl Default for FigureSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            times: vec![0.05, 0.2, 0.5, 1.0],
            locations: vec![0.0, 0.25, 0.5, 1.0],
            x_range: (-3.0, 3.0),
            x_points: 601,
            t_range: (0.005, 2.0),
            t_points: 400,
        }
    }
}

/// One `(t, x, g)` row.
pub type Sample = (f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    /// Profiles `x ↦ g(t, x)`, grouped by time.
    pub profiles: Vec<Sample>,
    /// Curves `t ↦ g(t, x)`, grouped by location.
    pub curves: Vec<Sample>,
    /// `(x, t at the sampled maximum, t*)` for each location `x ≠ 0`.
    pub peaks: Vec<(f64, f64, f64)>,
}

fn linspace((a, b): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Both heat-kernel tables, with shape checks: profiles must flatten as `t`
/// grows, each curve at `x ≠ 0` must rise and then fall, and the `x = 0`
/// curve must be decreasing.
pub fn figure2_datasets(spec: &FigureSpec) -> Result<FigureData> {
    let p = DiffusionParams::new(spec.alpha)?;
    if spec.times.iter().any(|t| !(*t > 0.0)) || spec.t_range.0 <= 0.0 {
        return Err(Error::Validation("figure times must be positive".into()));
    }
    if spec.x_points < 2 || spec.t_points < 3 || spec.t_range.1 <= spec.t_range.0 || spec.x_range.1 <= spec.x_range.0 {
        return Err(Error::Validation("figure ranges must be increasing with enough points".into()));
    }
    let xs = linspace(spec.x_range, spec.x_points);
    let ts = linspace(spec.t_range, spec.t_points);

    let mut profiles = Vec::with_capacity(spec.times.len() * xs.len());
    let mut last_max = f64::INFINITY;
    let mut times = spec.times.clone();
    times.sort_by(|a, b| a.total_cmp(b));
    for &t in &times {
        let mut peak = 0.0f64;
        for &x in &xs {
            let g = heat_kernel(&p, t, x)?;
            peak = peak.max(g);
            profiles.push((t, x, g));
        }
        if !(peak < last_max) {
            return Err(Error::Numerical(format!("profile at t = {t} does not flatten")));
        }
        last_max = peak;
    }

    let mut curves = Vec::with_capacity(spec.locations.len() * ts.len());
    let mut peaks = Vec::new();
    for &x in &spec.locations {
        let g: Vec<f64> = ts.iter().map(|&t| heat_kernel(&p, t, x)).collect::<Result<_>>()?;
        curves.extend(ts.iter().zip(&g).map(|(&t, &v)| (t, x, v)));
        if x == 0.0 {
            if g.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Numerical("curve at x = 0 is not decreasing".into()));
            }
            continue;
        }
        let imax = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty");
        if imax == 0 || imax == g.len() - 1 {
            return Err(Error::Numerical(format!(
                "curve at x = {x} has no interior maximum in the sampled time range"
            )));
        }
        peaks.push((x, ts[imax], peak_time(&p, x)));
    }
    Ok(FigureData { profiles, curves, peaks })
}

/// Writes rows as CSV with header `t,x,g`.
pub fn write_samples_csv<W: Write>(rows: &[Sample], mut out: W) -> Result<()> {
    writeln!(out, "t,x,g")?;
    for (t, x, g) in rows {
        writeln!(out, "{t:e},{x:e},{g:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> DiffusionParams {
        DiffusionParams::new(1.0).unwrap()
    }

    /// Composite Simpson on `[a, b]` with `n` (even) intervals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn kernel_values() {
        let p = unit();
        assert_relative_eq!(heat_kernel(&p, 1.0, 0.0).unwrap(), 0.28209479177387814, epsilon = 1e-15);
        assert!(heat_kernel(&p, 1.0, 40.0).unwrap() < 1e-100);
        assert!(heat_kernel(&p, 0.0, 1.0).is_err());
        assert!(DiffusionParams::new(0.0).is_err());
        let g = |x: f64| heat_kernel(&p, 1.0, x).unwrap();
        assert!(g(0.5) > g(1.0) && g(1.0) > g(2.0) && g(-2.0) == g(2.0));
    }

    #[test]
    fn kernel_has_unit_mass() {
        let p = DiffusionParams::new(0.7).unwrap();
        for t in [0.05, 0.5, 3.0] {
            let w = 20.0 * (p.alpha() * t).sqrt();
            let m = simpson(|x| heat_kernel(&p, t, x).unwrap(), -w, w, 4000);
            assert!((m - 1.0).abs() <= 1e-8, "{t}: {m}");
        }
    }

    #[test]
    fn spectral_kernel_values() {
        let p = unit();
        assert_eq!(spectral_kernel(&p, 0.0, 7.0), 1.0);
        assert_relative_eq!(spectral_kernel(&p, 0.5, 2.0), (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_solution_values() {
        let p = unit();
        assert_relative_eq!(gaussian_solution(&p, 1.0, 1.0, 0.0), (6.0 * PI).powf(-0.5), epsilon = 1e-15);
        assert_relative_eq!(gaussian_solution(&p, 0.8, 0.0, 0.3), (2.0 * PI * 0.64f64).powf(-0.5) * (-0.09f64 / 1.28).exp(), epsilon = 1e-15);
        for t in [0.0, 0.4, 2.0] {
            let m = simpson(|x| gaussian_solution(&p, 1.0, t, x), -30.0, 30.0, 6000);
            assert!((m - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn gaussian_solution_is_a_convolution_with_the_kernel() {
        let p = unit();
        let (s0, t) = (1.0, 1.0);
        for x in [0.0, 0.7, -2.0] {
            let conv = simpson(
                |xi| heat_kernel(&p, t, x - xi).unwrap() * gaussian_solution(&p, s0, 0.0, xi),
                -25.0,
                25.0,
                8000,
            );
            assert_relative_eq!(conv, gaussian_solution(&p, s0, t, x), max_relative = 1e-10);
        }
    }

    #[test]
    fn fourier_pair_in_unitary_convention() {
        // (2π)^{-1/2} ∫ g(t, x) e^{-iωx} dx = (2π)^{-1/2} ĝ(t, ω); g is even so
        // only the cosine part survives.
        let p = DiffusionParams::new(0.5).unwrap();
        let t = 0.8;
        let s = (2.0 * PI).powf(-0.5);
        for w in [0.0, 0.5, 1.3, 3.0] {
            let ft = s * simpson(|x| heat_kernel(&p, t, x).unwrap() * (w * x).cos(), -20.0, 20.0, 8000);
            assert!((ft - s * spectral_kernel(&p, t, w)).abs() <= 1e-6);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let p = unit();
        let (t1, t2) = (0.3, 0.45);
        for x in [0.0, 0.5, 1.7] {
            let v = simpson(
                |xi| heat_kernel(&p, t1, x - xi).unwrap() * heat_kernel(&p, t2, xi).unwrap(),
                -15.0,
                15.0,
                6000,
            );
            assert!((v - heat_kernel(&p, t1 + t2, x).unwrap()).abs() <= 1e-6);
        }
    }

    #[test]
    fn peak_time_for_unit_location() {
        assert_eq!(peak_time(&unit(), 1.0), 0.5);
        // ∂g/∂t vanishes there.
        let g = |t: f64| heat_kernel(&unit(), t, 1.0).unwrap();
        let h = 1e-5;
        assert!(((g(0.5 + h) - g(0.5 - h)) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn default_figures_have_expected_shape() {
        let spec = FigureSpec::default();
        let d = figure2_datasets(&spec).unwrap();
        assert_eq!(d.profiles.len(), 4 * 601);
        assert_eq!(d.curves.len(), 4 * 400);
        let step = (spec.t_range.1 - spec.t_range.0) / (spec.t_points - 1) as f64;
        let (_, tmax, tstar) = d.peaks.iter().find(|p| p.0 == 1.0).copied().unwrap();
        assert_eq!(tstar, 0.5);
        assert!((tmax - tstar).abs() <= step);
        let mut buf = Vec::new();
        write_samples_csv(&d.curves[..2], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x,g\n"));
    }

    #[test]
    fn figures_reject_bad_ranges() {
        let spec = FigureSpec { times: vec![0.0], ..FigureSpec::default() };
        assert!(figure2_datasets(&spec).is_err());
        // A curve whose peak lies beyond the sampled range.
        let spec = FigureSpec { locations: vec![3.0], ..FigureSpec::default() };
        assert!(figure2_datasets(&spec).is_err());
    }

    proptest! {
        #[test]
        fn spectral_semigroup(a in 0.1f64..3.0, w in -5.0f64..5.0, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let p = DiffusionParams::new(a).unwrap();
            let lhs = spectral_kernel(&p, t1 + t2, w);
            let rhs = spectral_kernel(&p, t1, w) * spectral_kernel(&p, t2, w);
            // Rounding of the exponent is amplified by its size.
            let arg = a * w * w * (t1 + t2);
            prop_assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + arg) * lhs + 1e-300);
        }

        #[test]
        fn spectral_kernel_derivative_signs(a in 0.1f64..3.0, w in -5.0f64..5.0, t in 0.0f64..2.0, k in 0u32..8) {
            let p = DiffusionParams::new(a).unwrap();
            let d = (-a * w * w).powi(k as i32) * spectral_kernel(&p, t, w);
            let sign_ok = if k % 2 == 0 { d >= 0.0 } else { d <= 0.0 };
            prop_assert!(sign_ok);
        }
    }
}
