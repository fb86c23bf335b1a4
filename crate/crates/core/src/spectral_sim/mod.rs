//! Spectral simulation of LTSI systems on a periodic one-dimensional domain.
//!
//! Each time step transforms the input slice to frequency space, advances
//! every mode with an exact exponential integrator, and transforms the output
//! back. The state lives in frequency space between steps.

mod field;
mod maps;

pub use field::SpatioTemporalField;
pub use maps::{
    controllability_map, controllability_matrix, observability_matrix, observability_output,
    observability_samples, simulate_mode_trajectory, storage_identity_check, storage_identity_mode,
    ModeStorage, ModeTrajectory, PastInput, QuadratureAssignment, SpatialProfile, StorageQuantities,
    StorageReport, TemporalProfile,
};

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::lti_mode::spectral_abscissa;
use crate::symbol::{evaluate_symbol, ModeTriple, SymbolFamily};

/// Boundary mass (relative to the peak) above which a wrap-around warning is issued.
pub const WRAP_WARNING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputHold {
    #[default]
    PiecewiseConstant,
    PiecewiseLinear,
}

/// How the per-mode propagators act on the spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// Forward and inverse FFT around every step.
    #[default]
    Spectral,
    /// The same per-mode operators applied as circular convolutions in
    /// physical space, with kernels precomputed once. Integer-cell shifts of
    /// the data commute with a step bit for bit; costs `O(N²)` per step.
    Circulant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub spatial_points: usize,
    pub domain_length: f64,
    /// Left end of the periodic cell; defaults to `-domain_length / 2`.
    #[serde(default)]
    pub x_origin: Option<f64>,
    pub dt: f64,
    pub t_span: (f64, f64),
    #[serde(default)]
    pub input_hold: InputHold,
    #[serde(default)]
    pub transport: Transport,
}

impl SimulationConfig {
    pub fn new(spatial_points: usize, domain_length: f64, dt: f64, t_span: (f64, f64)) -> Result<Self> {
        let cfg = Self {
            spatial_points,
            domain_length,
            x_origin: None,
            dt,
            t_span,
            input_hold: InputHold::PiecewiseConstant,
            transport: Transport::Spectral,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_hold(mut self, hold: InputHold) -> Self {
        self.input_hold = hold;
        self
    }

    pub fn with_transport(mut self, transport: Transport) -> Self {
        self.transport = transport;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spatial_points;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Validation(format!(
                "spatial_points must be a power of two >= 8, got {n}"
            )));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            return Err(Error::Validation("domain_length must be positive".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        let (t0, t1) = self.t_span;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Validation("t_span must satisfy t_end > t_start".into()));
        }
        self.steps()?;
        Ok(())
    }

    /// Number of steps; the span must be a whole number of `dt`.
    pub fn steps(&self) -> Result<usize> {
        let r = (self.t_span.1 - self.t_span.0) / self.dt;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Validation(format!(
                "t_span length is not a whole number of steps (dt = {})",
                self.dt
            )));
        }
        Ok(k as usize)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        let n = self.steps()?;
        Ok((0..=n).map(|i| self.t_span.0 + i as f64 * self.dt).collect())
    }

    pub fn x_origin(&self) -> f64 {
        self.x_origin.unwrap_or(-0.5 * self.domain_length)
    }

    pub fn x_grid(&self) -> Vec<f64> {
        let h = self.domain_length / self.spatial_points as f64;
        let x0 = self.x_origin();
        (0..self.spatial_points).map(|j| x0 + j as f64 * h).collect()
    }

    /// `ω_k = 2πk/L` for `k = -N/2, …, N/2 - 1`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.spatial_points as isize;
        (-n / 2..n / 2)
            .map(|k| 2.0 * PI * k as f64 / self.domain_length)
            .collect()
    }
}

/// Unitary DFT on `N` points with output in shifted order (`k = -N/2` first).
#[derive(Clone)]
pub struct SpatialFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpatialFft {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.debug_struct("SpatialFft").field("n", &self.n).finish()
    }
}

impl SpatialFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, v: &[C64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Validation(format!(
                "slice has {} samples, expected {}",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn forward(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check(f)?;
        let mut buf = f.to_vec();
        self.forward.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        buf.rotate_right(self.n / 2);
        Ok(buf)
    }

    pub fn inverse(&self, fhat: &[C64]) -> Result<Vec<C64>> {
        self.check(fhat)?;
        let mut buf = fhat.to_vec();
        buf.rotate_left(self.n / 2);
        self.inverse.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        Ok(buf)
    }
}

pub fn spatial_fft(f: &[C64]) -> Result<Vec<C64>> {
    SpatialFft::new(f.len()).forward(f)
}

pub fn inverse_spatial_fft(fhat: &[C64]) -> Result<Vec<C64>> {
    SpatialFft::new(fhat.len()).inverse(fhat)
}

/// Per-mode state `ẑ_ω(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub omega: f64,
    pub z: CVec,
}

/// Exact one-step operators of `ż = Az + Bu` for a fixed step:
/// `Φ = e^{A·dt}`, `Γ₀ = ∫₀^dt e^{As} ds` and `Γ₁ = ∫₀^dt e^{A(dt-s)} s ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePropagator {
    pub phi: CMat,
    pub gamma0: CMat,
    pub gamma1: CMat,
    pub dt: f64,
}

impl ModePropagator {
    pub fn new(a: &CMat, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        let n = a.nrows();
        // e^{M dt} with M = [[A, I, 0], [0, 0, I], [0, 0, 0]] holds Φ, Γ₀, Γ₁
        // in its first block row.
        let mut m = CMat::zeros(3 * n, 3 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&a.scale(dt));
        for i in 0..n {
            m[(i, n + i)] = linalg::c(dt);
            m[(n + i, 2 * n + i)] = linalg::c(dt);
        }
        let e = linalg::expm(&m);
        let phi = e.view((0, 0), (n, n)).into_owned();
        let gamma0 = e.view((0, n), (n, n)).into_owned();
        let gamma1 = e.view((0, 2 * n), (n, n)).into_owned();
        if !(linalg::is_finite(&phi) && linalg::is_finite(&gamma0) && linalg::is_finite(&gamma1)) {
            let abscissa = linalg::spectral_abscissa(a).unwrap_or(f64::INFINITY);
            return Err(Error::Overflow { abscissa });
        }
        Ok(Self { phi, gamma0, gamma1, dt })
    }

    /// `z⁺` for input samples `u_now` at the step start and `u_next` at its end.
    pub fn step(&self, b: &CMat, z: &CVec, u_now: &CVec, u_next: &CVec, hold: InputHold) -> CVec {
        let mut out = &self.phi * z + &self.gamma0 * (b * u_now);
        if hold == InputHold::PiecewiseLinear {
            let slope = (u_next - u_now).unscale(self.dt);
            out += &self.gamma1 * (b * slope);
        }
        out
    }
}

/// One exact step of a single mode.
pub fn step_mode(
    mode: &ModeTriple,
    state: &ModeState,
    u_now: &CVec,
    u_next: &CVec,
    dt: f64,
    hold: InputHold,
) -> Result<ModeState> {
    if state.z.len() != mode.n() || u_now.len() != mode.m() || u_next.len() != mode.m() {
        return Err(Error::Validation("state or input has the wrong length for this mode".into()));
    }
    let prop = ModePropagator::new(mode.a(), dt)?;
    Ok(ModeState {
        omega: state.omega,
        z: prop.step(mode.b(), &state.z, u_now, u_next, hold),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Zero,
    /// One state per frequency, in the shifted order of [`SimulationConfig::frequencies`].
    Modes(Vec<CVec>),
    /// A state field on the spatial grid: one time sample, `n` channels.
    Physical(SpatioTemporalField),
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub output: SpatioTemporalField,
    pub final_states: Vec<ModeState>,
    /// `Σ‖z‖²` over the grid after every step, starting with the initial
    /// state (the same in physical and frequency space).
    pub state_energy: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Modes {
    freqs: Vec<f64>,
    triples: Vec<ModeTriple>,
    props: Vec<ModePropagator>,
    n: usize,
    m: usize,
    p: usize,
}

fn prepare_modes(family: &SymbolFamily, cfg: &SimulationConfig) -> Result<Modes> {
    let freqs = cfg.frequencies();
    let triples: Vec<ModeTriple> = freqs
        .par_iter()
        .map(|w| evaluate_symbol(family, &[*w]))
        .collect::<Result<_>>()?;
    let (n, m, p) = (triples[0].n(), triples[0].m(), triples[0].p());
    if triples.iter().any(|t| t.n() != n || t.m() != m || t.p() != p) {
        return Err(Error::Validation("mode dimensions vary across frequencies".into()));
    }
    let props = triples
        .par_iter()
        .map(|t| {
            ModePropagator::new(t.a(), cfg.dt).map_err(|e| match e {
                Error::Overflow { abscissa } => Error::Overflow {
                    abscissa: spectral_abscissa(t).unwrap_or(abscissa),
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Modes { freqs, triples, props, n, m, p })
}

/// Transforms each channel of a physical slice (`x`-major, channel-minor) to
/// per-mode vectors.
fn to_modes(fft: &SpatialFft, slice: &[C64], channels: usize) -> Result<Vec<CVec>> {
    let n = fft.len();
    let mut out = vec![CVec::zeros(channels); n];
    for ch in 0..channels {
        let col: Vec<C64> = slice.iter().skip(ch).step_by(channels).copied().collect();
        for (k, v) in fft.forward(&col)?.into_iter().enumerate() {
            out[k][ch] = v;
        }
    }
    Ok(out)
}

fn to_physical(fft: &SpatialFft, modes: &[CVec], channels: usize, out: &mut [C64]) -> Result<()> {
    for ch in 0..channels {
        let col: Vec<C64> = modes.iter().map(|v| v[ch]).collect();
        for (ix, v) in fft.inverse(&col)?.into_iter().enumerate() {
            out[ix * channels + ch] = v;
        }
    }
    Ok(())
}

fn check_input(input: &SpatioTemporalField, cfg: &SimulationConfig, times: &[f64], m: usize) -> Result<()> {
    if input.channels() != m || input.x().len() != cfg.spatial_points || input.times().len() != times.len() {
        return Err(Error::Validation(format!(
            "input field is {}x{}x{}, expected {}x{}x{m} (times x points x channels)",
            input.times().len(),
            input.x().len(),
            input.channels(),
            times.len(),
            cfg.spatial_points
        )));
    }
    let tol = 1e-9 * cfg.dt;
    if input.times().iter().zip(times).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::Validation("input time grid does not match the configuration".into()));
    }
    Ok(())
}

/// Runs the system over `cfg.t_span`. `input` defaults to zero; the output
/// field is sampled at every time node including the start.
pub fn simulate(
    family: &SymbolFamily,
    cfg: &SimulationConfig,
    input: Option<&SpatioTemporalField>,
    init: &InitialState,
) -> Result<SimulationResult> {
    cfg.validate()?;
    let modes = prepare_modes(family, cfg)?;
    let times = cfg.times()?;
    if let Some(u) = input {
        check_input(u, cfg, &times, modes.m)?;
    }
    let fft = SpatialFft::new(cfg.spatial_points);
    let nx = cfg.spatial_points;
    let z0: Vec<CVec> = match init {
        InitialState::Zero => vec![CVec::zeros(modes.n); nx],
        InitialState::Modes(v) => {
            if v.len() != nx || v.iter().any(|z| z.len() != modes.n) {
                return Err(Error::Validation(format!(
                    "initial state needs {nx} mode vectors of length {}",
                    modes.n
                )));
            }
            v.clone()
        }
        InitialState::Physical(f) => {
            if f.x().len() != nx || f.channels() != modes.n || f.times().is_empty() {
                return Err(Error::Validation(format!(
                    "initial state field must have {nx} points and {} channels",
                    modes.n
                )));
            }
            to_modes(&fft, f.slice(0), modes.n)?
        }
    };
    match cfg.transport {
        Transport::Spectral => run_spectral(&modes, cfg, &fft, &times, input, z0),
        Transport::Circulant => {
            // A physical initial state is used as given; a round trip through
            // the FFT would break bitwise shift equivariance.
            let z_phys = match init {
                InitialState::Physical(f) => field_vectors(f.slice(0), modes.n),
                _ => {
                    let mut flat = vec![C64::new(0.0, 0.0); nx * modes.n];
                    to_physical(&fft, &z0, modes.n, &mut flat)?;
                    field_vectors(&flat, modes.n)
                }
            };
            run_circulant(&modes, cfg, &fft, &times, input, z_phys)
        }
    }
}

fn energy(states: &[CVec]) -> f64 {
    states.iter().map(|z| z.norm_squared()).sum()
}

fn wrap_warning(output: &SpatioTemporalField) -> Option<String> {
    let nx = output.x().len();
    let ch = output.channels();
    let mut peak = 0.0f64;
    let mut edge = 0.0f64;
    for it in 0..output.times().len() {
        for ix in 0..nx {
            for c in 0..ch {
                let v = output.get(it, ix, c).norm();
                peak = peak.max(v);
                if ix == 0 || ix == nx - 1 {
                    edge = edge.max(v);
                }
            }
        }
    }
    (peak > 0.0 && edge > WRAP_WARNING * peak).then(|| {
        format!("warning: output reaches the periodic boundary ({:e} of peak); enlarge domain_length", edge / peak)
    })
}

fn run_spectral(
    modes: &Modes,
    cfg: &SimulationConfig,
    fft: &SpatialFft,
    times: &[f64],
    input: Option<&SpatioTemporalField>,
    mut z: Vec<CVec>,
) -> Result<SimulationResult> {
    let nx = cfg.spatial_points;
    let mut output = SpatioTemporalField::zeros(times.to_vec(), cfg.x_grid(), modes.p);
    let zero_u = vec![CVec::zeros(modes.m); nx];
    let input_modes = |it: usize| -> Result<Vec<CVec>> {
        match input {
            Some(u) => to_modes(fft, u.slice(it), modes.m),
            None => Ok(zero_u.clone()),
        }
    };
    let observe = |z: &[CVec], out: &mut [C64]| -> Result<()> {
        let y: Vec<CVec> = z
            .par_iter()
            .zip(&modes.triples)
            .map(|(zk, t)| t.c() * zk)
            .collect();
        to_physical(fft, &y, modes.p, out)
    };

    observe(&z, output.slice_mut(0))?;
    let mut state_energy = vec![energy(&z)];
    let mut u_now = input_modes(0)?;
    for it in 1..times.len() {
        let u_next = input_modes(it)?;
        z = z
            .par_iter()
            .zip(&modes.props)
            .zip(&modes.triples)
            .zip(u_now.par_iter().zip(&u_next))
            .map(|(((zk, prop), t), (un, ux))| prop.step(t.b(), zk, un, ux, cfg.input_hold))
            .collect();
        observe(&z, output.slice_mut(it))?;
        state_energy.push(energy(&z));
        u_now = u_next;
    }
    finish(modes, output, z, state_energy)
}

fn finish(modes: &Modes, output: SpatioTemporalField, z: Vec<CVec>, state_energy: Vec<f64>) -> Result<SimulationResult> {
    let warnings = wrap_warning(&output).into_iter().collect();
    let final_states = modes
        .freqs
        .iter()
        .zip(z)
        .map(|(w, z)| ModeState { omega: *w, z })
        .collect();
    Ok(SimulationResult {
        output,
        final_states,
        state_energy,
        warnings,
    })
}

/// Physical-space kernel `K[d] = N^{-1/2}·(F⁻¹ M)[d]` of the Fourier multiplier
/// `M_k`, so that `(F⁻¹ M F z)[x] = Σ_d K[d] z[x - d]`.
fn circulant_kernel(fft: &SpatialFft, symbols: &[CMat]) -> Result<Vec<CMat>> {
    let nx = fft.len();
    let (r, c) = symbols[0].shape();
    let mut kernel = vec![CMat::zeros(r, c); nx];
    let s = 1.0 / (nx as f64).sqrt();
    for i in 0..r {
        for j in 0..c {
            let col: Vec<C64> = symbols.iter().map(|m| m[(i, j)]).collect();
            for (d, v) in fft.inverse(&col)?.into_iter().enumerate() {
                kernel[d][(i, j)] = v * s;
            }
        }
    }
    Ok(kernel)
}

/// `Σ_d K[d] v[(x - d) mod N]` for every `x`, summed in a fixed order.
fn circular_apply(kernel: &[CMat], v: &[CVec]) -> Vec<CVec> {
    let nx = v.len();
    (0..nx)
        .into_par_iter()
        .map(|x| {
            let mut acc = CVec::zeros(kernel[0].nrows());
            for (d, k) in kernel.iter().enumerate() {
                acc += k * &v[(x + nx - d) % nx];
            }
            acc
        })
        .collect()
}

fn field_vectors(slice: &[C64], channels: usize) -> Vec<CVec> {
    slice.chunks_exact(channels).map(CVec::from_column_slice).collect()
}

fn run_circulant(
    modes: &Modes,
    cfg: &SimulationConfig,
    fft: &SpatialFft,
    times: &[f64],
    input: Option<&SpatioTemporalField>,
    mut z: Vec<CVec>,
) -> Result<SimulationResult> {
    let nx = cfg.spatial_points;
    let by_mode = |f: &dyn Fn(usize) -> CMat| -> Vec<CMat> { (0..nx).map(f).collect() };
    let k_phi = circulant_kernel(fft, &by_mode(&|k| modes.props[k].phi.clone()))?;
    let k_g0 = circulant_kernel(fft, &by_mode(&|k| &modes.props[k].gamma0 * modes.triples[k].b()))?;
    let k_g1 = circulant_kernel(
        fft,
        &by_mode(&|k| (&modes.props[k].gamma1 * modes.triples[k].b()).unscale(cfg.dt)),
    )?;
    let k_c = circulant_kernel(fft, &by_mode(&|k| modes.triples[k].c().clone()))?;

    let mut output = SpatioTemporalField::zeros(times.to_vec(), cfg.x_grid(), modes.p);
    let write = |out: &mut [C64], y: &[CVec]| {
        for (ix, v) in y.iter().enumerate() {
            out[ix * modes.p..(ix + 1) * modes.p].copy_from_slice(v.as_slice());
        }
    };
    let u_at = |it: usize| -> Vec<CVec> {
        match input {
            Some(u) => field_vectors(u.slice(it), modes.m),
            None => vec![CVec::zeros(modes.m); nx],
        }
    };

    write(output.slice_mut(0), &circular_apply(&k_c, &z));
    let mut state_energy = vec![energy(&z)];
    let mut u_now = u_at(0);
    for it in 1..times.len() {
        let u_next = u_at(it);
        let mut next = circular_apply(&k_phi, &z);
        let forced = circular_apply(&k_g0, &u_now);
        for (a, b) in next.iter_mut().zip(&forced) {
            *a += b;
        }
        if cfg.input_hold == InputHold::PiecewiseLinear {
            let slope: Vec<CVec> = u_next.iter().zip(&u_now).map(|(a, b)| a - b).collect();
            for (a, b) in next.iter_mut().zip(&circular_apply(&k_g1, &slope)) {
                *a += b;
            }
        }
        z = next;
        write(output.slice_mut(it), &circular_apply(&k_c, &z));
        state_energy.push(energy(&z));
        u_now = u_next;
    }
    let flat: Vec<C64> = z.iter().flat_map(|v| v.iter().copied()).collect();
    let z_hat = to_modes(fft, &flat, modes.n)?;
    finish(modes, output, z_hat, state_energy)
}
