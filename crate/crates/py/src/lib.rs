//! Python bindings. Reports with many fields come back as plain dicts built
//! from the same JSON the CLI writes.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use ltsi_relax::certify::QuadratureSpec;
use ltsi_relax::hankel::{build_hankel, build_quadrature_with, hankel_psd_test, HankelDiscretization, QuadratureScheme};
use ltsi_relax::spectral_sim::{PastInput, QuadratureAssignment, SimulationConfig, SpatioTemporalField};
use ltsi_relax::{diffusion_ref, lti_mode, passivity, spectral_sim};

create_exception!(ltsi_relax, LtsiError, PyException);

fn err(e: ltsi_relax::Error) -> PyErr {
    match e {
        ltsi_relax::Error::Validation(_) | ltsi_relax::Error::Parse(_) | ltsi_relax::Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => LtsiError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| LtsiError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tolerances(overrides: Option<HashMap<String, f64>>) -> PyResult<ltsi_relax::Tolerances> {
    let mut t = ltsi_relax::Tolerances::default();
    for (name, value) in overrides.unwrap_or_default() {
        t.set(&name, &value.to_string()).map_err(err)?;
    }
    Ok(t)
}

fn quadrature(scheme: &str, nodes: usize) -> PyResult<QuadratureSpec> {
    format!("{scheme},{nodes}").parse().map_err(err)
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<DMatrix<Complex64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "ModeTriple", module = "ltsi_relax", from_py_object)]
#[derive(Clone)]
struct PyModeTriple(ltsi_relax::ModeTriple);

#[pymethods]
impl PyModeTriple {
    #[new]
    #[pyo3(signature = (a, b, c, omega = vec![0.0]))]
    fn new(a: Vec<Vec<Complex64>>, b: Vec<Vec<Complex64>>, c: Vec<Vec<Complex64>>, omega: Vec<f64>) -> PyResult<Self> {
        ltsi_relax::ModeTriple::new(matrix(a)?, matrix(b)?, matrix(c)?, omega)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn a(&self) -> Vec<Vec<Complex64>> {
        rows(self.0.a())
    }

    #[getter]
    fn b(&self) -> Vec<Vec<Complex64>> {
        rows(self.0.b())
    }

    #[getter]
    fn c(&self) -> Vec<Vec<Complex64>> {
        rows(self.0.c())
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.0.omega().to_vec()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        (self.0.n(), self.0.m(), self.0.p())
    }

    fn impulse_response(&self, t: f64) -> PyResult<Vec<Vec<Complex64>>> {
        lti_mode::impulse_response(&self.0, t).map(|g| rows(&g)).map_err(err)
    }

    fn spectral_abscissa(&self) -> PyResult<f64> {
        lti_mode::spectral_abscissa(&self.0).map_err(err)
    }

    /// Moment, Bernstein and internal-form results as a dict.
    #[pyo3(signature = (tolerances = None))]
    fn analyze<'py>(&self, py: Python<'py>, tolerances: Option<HashMap<String, f64>>) -> PyResult<Bound<'py, PyAny>> {
        let v = lti_mode::analyze_mode(&self.0, &self::tolerances(tolerances)?).map_err(err)?;
        to_py(py, &v)
    }

    fn __repr__(&self) -> String {
        format!("ModeTriple(n={}, m={}, p={}, omega={:?})", self.0.n(), self.0.m(), self.0.p(), self.0.omega())
    }
}

#[pyclass(name = "SymbolFamily", module = "ltsi_relax", from_py_object)]
#[derive(Clone)]
struct PySymbolFamily(ltsi_relax::SymbolFamily);

#[pymethods]
impl PySymbolFamily {
    #[staticmethod]
    fn diffusion(alpha: f64) -> Self {
        Self(ltsi_relax::SymbolFamily::diffusion(alpha))
    }

    #[staticmethod]
    fn shifted_diffusion(alpha: f64, kappa: f64) -> Self {
        Self(ltsi_relax::SymbolFamily::shifted_diffusion(alpha, kappa))
    }

    #[staticmethod]
    fn damped_oscillator(zeta: f64, omega0: f64) -> Self {
        Self(ltsi_relax::SymbolFamily::damped_oscillator(zeta, omega0))
    }

    /// `terms` holds `(offset, curvature, residue)` triples.
    #[staticmethod]
    fn diagonal_exponential(terms: Vec<(f64, f64, f64)>) -> Self {
        let terms = terms
            .into_iter()
            .map(|(offset, curvature, residue)| ltsi_relax::ExpTerm { offset, curvature, residue })
            .collect();
        Self(ltsi_relax::SymbolFamily::diagonal_exponential(terms))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ltsi_relax::SymbolFamily::from_json(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    fn evaluate(&self, omega: Vec<f64>) -> PyResult<PyModeTriple> {
        ltsi_relax::evaluate_symbol(&self.0, &omega).map(PyModeTriple).map_err(err)
    }

    /// Invariant violations as `(location, message)` pairs; empty when valid.
    fn validate(&self) -> Vec<(String, String)> {
        ltsi_relax::validate_family(&self.0)
            .into_iter()
            .map(|f| (f.location, f.message))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("SymbolFamily({})", self.0.kind.name())
    }
}

#[pyclass(name = "FrequencyGrid", module = "ltsi_relax", from_py_object)]
#[derive(Clone)]
struct PyFrequencyGrid(ltsi_relax::FrequencyGrid);

#[pymethods]
impl PyFrequencyGrid {
    #[new]
    fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<Self> {
        ltsi_relax::FrequencyGrid::new(points, weights).map(Self).map_err(err)
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (omega_max, count, s = 1))]
fn make_frequency_grid(omega_max: f64, count: usize, s: usize) -> PyResult<PyFrequencyGrid> {
    ltsi_relax::make_frequency_grid(omega_max, count, s)
        .map(PyFrequencyGrid)
        .map_err(err)
}

#[pyclass(name = "HankelDiscretization", module = "ltsi_relax")]
struct PyHankel(HankelDiscretization);

#[pymethods]
impl PyHankel {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues.clone()
    }

    #[getter]
    fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue
    }

    #[getter]
    fn max_eigenvalue(&self) -> f64 {
        self.0.max_eigenvalue
    }

    #[getter]
    fn symmetry_defect(&self) -> f64 {
        self.0.symmetry_defect
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<Complex64>> {
        rows(&self.0.matrix)
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.quadrature.nodes().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.quadrature.weights().to_vec()
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn psd_test<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &hankel_psd_test(&self.0, tol))
    }

    /// `ℌ(v) = ½⟨Hv, v⟩` for samples `v` at the quadrature nodes.
    fn memory_functional(&self, v: Vec<Complex64>) -> PyResult<f64> {
        ltsi_relax::hankel::memory_functional(&self.0, &v)
            .map(|m| m.value)
            .map_err(err)
    }
}

/// Hankel matrix of a stable mode. The quadrature is scaled to `decay_rate`,
/// which defaults to minus the spectral abscissa.
#[pyfunction]
#[pyo3(signature = (mode, scheme = "trapezoid", nodes = 128, decay_rate = None))]
fn hankel(mode: &PyModeTriple, scheme: &str, nodes: usize, decay_rate: Option<f64>) -> PyResult<PyHankel> {
    let scheme: QuadratureScheme = scheme.parse().map_err(err)?;
    let rate = match decay_rate {
        Some(r) => r,
        None => -lti_mode::spectral_abscissa(&mode.0).map_err(err)?,
    };
    let tail = ltsi_relax::Tolerances::default().tail_eps;
    let q = build_quadrature_with(scheme, nodes, rate, tail).map_err(err)?;
    build_hankel(&mode.0, &q).map(PyHankel).map_err(err)
}

/// Relaxation, internal-relaxation and stability certificates plus per-mode
/// reports, as a dict.
#[pyfunction]
#[pyo3(signature = (family, grid, scheme = "trapezoid", nodes = 128, tolerances = None))]
fn certify_relaxation<'py>(
    py: Python<'py>,
    family: &PySymbolFamily,
    grid: &PyFrequencyGrid,
    scheme: &str,
    nodes: usize,
    tolerances: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let tol = self::tolerances(tolerances)?;
    let quad = quadrature(scheme, nodes)?;
    let a = py
        .detach(|| ltsi_relax::certify_relaxation(&family.0, &grid.0, quad, &tol))
        .map_err(err)?;
    to_py(py, &a)
}

#[pyclass(name = "PassivityCertificate", module = "ltsi_relax", from_py_object)]
#[derive(Clone)]
struct PyPassivityCertificate(passivity::PassivityCertificate);

#[pymethods]
impl PyPassivityCertificate {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        passivity::PassivityCertificate::from_json(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn sup_norm(&self) -> f64 {
        self.0.sup_norm()
    }

    fn q_at(&self, omega: Vec<f64>) -> PyResult<Vec<Vec<Complex64>>> {
        self.0.q_at(&omega).map(rows).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.modes().len()
    }
}

#[pyfunction]
#[pyo3(signature = (family, grid, tol = 1e-9))]
fn identity_certificate(family: &PySymbolFamily, grid: &PyFrequencyGrid, tol: f64) -> PyResult<PyPassivityCertificate> {
    passivity::identity_certificate(&family.0, &grid.0, tol)
        .map(PyPassivityCertificate)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (family, grid, certificate, tolerances = None))]
fn verify_certificate<'py>(
    py: Python<'py>,
    family: &PySymbolFamily,
    grid: &PyFrequencyGrid,
    certificate: &PyPassivityCertificate,
    tolerances: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let tol = self::tolerances(tolerances)?;
    let c = passivity::verify_certificate(&family.0, &grid.0, &certificate.0, &tol).map_err(err)?;
    to_py(py, &c)
}

/// `past_input` uses the configuration-file JSON form, e.g.
/// `{"temporal": {"kind": "exponential", "rate": 1.0}}`.
#[pyfunction]
#[pyo3(signature = (family, grid, past_input, scheme = "laguerre", nodes = 128, tolerances = None))]
fn storage_identity_check<'py>(
    py: Python<'py>,
    family: &PySymbolFamily,
    grid: &PyFrequencyGrid,
    past_input: &str,
    scheme: &str,
    nodes: usize,
    tolerances: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let past: PastInput = serde_json::from_str(past_input).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let q = quadrature(scheme, nodes)?;
    let tol = self::tolerances(tolerances)?;
    let quads = QuadratureAssignment::PerMode { scheme: q.scheme, nodes: q.nodes };
    let r = py
        .detach(|| spectral_sim::storage_identity_check(&family.0, &grid.0, &quads, &past, &tol))
        .map_err(err)?;
    to_py(py, &r)
}

/// `(times, x, output[t][x])`.
type Trajectory = (Vec<f64>, Vec<f64>, Vec<Vec<Complex64>>);

/// Runs `family` from a physical initial state (one value per grid point on
/// state channel 0) with zero input. Returns `(times, x, output)` where
/// `output[t][x]` is channel 0 of the output.
#[pyfunction]
#[pyo3(signature = (family, spatial_points, domain_length, dt, t_end, initial = None))]
fn simulate(
    py: Python<'_>,
    family: &PySymbolFamily,
    spatial_points: usize,
    domain_length: f64,
    dt: f64,
    t_end: f64,
    initial: Option<Vec<Complex64>>,
) -> PyResult<Trajectory> {
    let cfg = SimulationConfig::new(spatial_points, domain_length, dt, (0.0, t_end)).map_err(err)?;
    let n = family.0.dims.n;
    let init = match initial {
        None => spectral_sim::InitialState::Zero,
        Some(v) => {
            if v.len() != spatial_points {
                return Err(PyValueError::new_err("initial state needs one value per grid point"));
            }
            let field = SpatioTemporalField::from_fn(vec![0.0], cfg.x_grid(), n, |_, _, _| Complex64::new(0.0, 0.0));
            let mut data = field.data().to_vec();
            for (ix, z) in v.into_iter().enumerate() {
                data[ix * n] = z;
            }
            spectral_sim::InitialState::Physical(
                SpatioTemporalField::from_data(vec![0.0], cfg.x_grid(), n, data).map_err(err)?,
            )
        }
    };
    let r = py
        .detach(|| spectral_sim::simulate(&family.0, &cfg, None, &init))
        .map_err(err)?;
    let out = &r.output;
    let series = (0..out.times().len()).map(|it| out.channel_at(it, 0)).collect();
    Ok((out.times().to_vec(), out.x().to_vec(), series))
}

#[pyfunction]
fn heat_kernel(alpha: f64, t: f64, x: f64) -> PyResult<f64> {
    let p = diffusion_ref::DiffusionParams::new(alpha).map_err(err)?;
    diffusion_ref::heat_kernel(&p, t, x).map_err(err)
}

#[pyfunction]
fn gaussian_solution(alpha: f64, sigma0: f64, t: f64, x: f64) -> PyResult<f64> {
    let p = diffusion_ref::DiffusionParams::new(alpha).map_err(err)?;
    Ok(diffusion_ref::gaussian_solution(&p, sigma0, t, x))
}

#[pyfunction]
fn peak_time(alpha: f64, x: f64) -> PyResult<f64> {
    let p = diffusion_ref::DiffusionParams::new(alpha).map_err(err)?;
    Ok(diffusion_ref::peak_time(&p, x))
}

#[pymodule]
#[pyo3(name = "ltsi_relax")]
fn ltsi_relax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LtsiError", m.py().get_type::<LtsiError>())?;
    m.add_class::<PyModeTriple>()?;
    m.add_class::<PySymbolFamily>()?;
    m.add_class::<PyFrequencyGrid>()?;
    m.add_class::<PyHankel>()?;
    m.add_class::<PyPassivityCertificate>()?;
    m.add_function(wrap_pyfunction!(make_frequency_grid, m)?)?;
    m.add_function(wrap_pyfunction!(hankel, m)?)?;
    m.add_function(wrap_pyfunction!(certify_relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(identity_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(storage_identity_check, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_solution, m)?)?;
    m.add_function(wrap_pyfunction!(peak_time, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
