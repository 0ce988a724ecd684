//! Python bindings. Rich results cross the boundary as JSON text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use core_lib::classifier::{classify as classify_orbit, ClassifierConfig};
use core_lib::config::RenderOptions;
use core_lib::kamcheck::{self, KamConstants};
use core_lib::output;
use core_lib::pendulum::{self, PendulumModel};
use core_lib::survey::{self, SurveyConfig};
use core_lib::{svg, Convention, Error, Harmonic, PhaseState, SingleResonanceGeometry};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::DimensionMismatch { .. } | Error::Domain(_) | Error::DuplicateHarmonic { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    output::to_json(v).map_err(py_err)
}

/// Finite trigonometric polynomial `Σ a·cos(⟨k,x⟩ + φ)`.
#[pyclass(name = "TrigSeries", module = "kamtori", from_py_object)]
#[derive(Clone)]
struct PyTrigSeries {
    inner: core_lib::TrigSeries,
}

#[pymethods]
impl PyTrigSeries {
    /// Build from `[(k, amplitude, phase), ...]`.
    #[new]
    fn new(dim: usize, terms: Vec<(Vec<i64>, f64, f64)>) -> PyResult<Self> {
        let harmonics = terms.into_iter().map(|(k, a, p)| Harmonic::new(k, a, p)).collect();
        Ok(Self { inner: core_lib::TrigSeries::new(dim, harmonics).map_err(py_err)? })
    }

    /// `a₁cos x₁ + a₂cos x₂ + a₃cos(x₁ + x₂)` with phases.
    #[staticmethod]
    #[pyo3(signature = (a=[1.0, 1.0, 1.0], phi=[0.0, 0.0, 0.0]))]
    fn three_wave(a: [f64; 3], phi: [f64; 3]) -> Self {
        Self { inner: core_lib::TrigSeries::three_wave(a, phi) }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn terms(&self) -> Vec<(Vec<i64>, f64, f64)> {
        self.inner.terms().iter().map(|t| (t.k.clone(), t.amplitude, t.phase)).collect()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.eval(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.gradient(&x))
    }

    fn __repr__(&self) -> String {
        format!("TrigSeries(dim={}, terms={})", self.inner.dim(), self.inner.terms().len())
    }
}

impl PyTrigSeries {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() == self.inner.dim() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("expected {} angles, got {}", self.inner.dim(), x.len())))
        }
    }
}

/// Recorded states of one orbit.
#[pyclass(name = "Orbit", module = "kamtori", from_py_object)]
#[derive(Clone)]
struct PyOrbit {
    inner: core_lib::Orbit,
}

#[pymethods]
impl PyOrbit {
    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    #[getter]
    fn stride(&self) -> u64 {
        self.inner.stride
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Actions of every recorded state.
    fn actions(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|s| s.y.clone()).collect()
    }

    /// Lifted angles of every recorded state.
    fn angles(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(PhaseState::x_lift).collect()
    }

    fn to_csv(&self) -> String {
        output::orbit_csv(&self.inner)
    }

    /// Label name of the orbit under the default classifier thresholds.
    fn classify(&self) -> &'static str {
        classify_orbit(&self.inner, &ClassifierConfig::default()).label.name()
    }

    /// Full classification evidence as JSON.
    fn classify_json(&self) -> PyResult<String> {
        json(&classify_orbit(&self.inner, &ClassifierConfig::default()))
    }

    #[pyo3(signature = (overlay=false, width=640, height=640))]
    fn render(&self, overlay: bool, width: u32, height: u32) -> PyResult<String> {
        let opts = RenderOptions { overlay, width, height, ..RenderOptions::default() };
        svg::render_action_projection(std::slice::from_ref(&self.inner), &opts).map_err(py_err)
    }
}

/// One map step; returns `(y', x')` with lifted angles.
#[pyfunction]
fn map_step(potential: &PyTrigSeries, y: Vec<f64>, x: Vec<f64>, eps: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = PhaseState::new(y, x).map_err(py_err)?;
    let n = core_lib::map_step(&s, &potential.inner, eps).map_err(py_err)?;
    Ok((n.y.clone(), n.x_lift()))
}

/// Inverse of [`map_step`].
#[pyfunction]
fn inverse_step(potential: &PyTrigSeries, y: Vec<f64>, x: Vec<f64>, eps: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = PhaseState::new(y, x).map_err(py_err)?;
    let n = core_lib::inverse_step(&s, &potential.inner, eps).map_err(py_err)?;
    Ok((n.y.clone(), n.x_lift()))
}

#[pyfunction]
#[pyo3(signature = (potential, y, x, eps, steps, stride=1))]
fn iterate(potential: &PyTrigSeries, y: Vec<f64>, x: Vec<f64>, eps: f64, steps: u64, stride: u64) -> PyResult<PyOrbit> {
    let s = PhaseState::new(y, x).map_err(py_err)?;
    let inner = core_lib::iterate(&s, &potential.inner, eps, steps, stride).map_err(py_err)?;
    Ok(PyOrbit { inner })
}

/// Primitive resonances `(k, k₀, defect)` of a frequency vector.
#[pyfunction]
#[pyo3(signature = (nu, n_max, tolerance, convention="map"))]
fn detect_resonances(nu: Vec<f64>, n_max: i64, tolerance: f64, convention: &str) -> PyResult<Vec<(Vec<i64>, i64, f64)>> {
    let conv = match convention {
        "map" => Convention::Map,
        "flow" => Convention::Flow,
        other => return Err(PyValueError::new_err(format!("unknown convention '{other}'"))),
    };
    let r = core_lib::detect_resonances(&nu, n_max, tolerance, conv).map_err(py_err)?;
    Ok(r.found.into_iter().map(|h| (h.k, h.k0, h.defect)).collect())
}

/// Reduced pendulum `½Ap² + u(q)`.
#[pyclass(name = "Pendulum", module = "kamtori")]
struct PyPendulum {
    inner: PendulumModel,
}

#[pymethods]
impl PyPendulum {
    /// Pendulum with stiffness `a` and `u(q) = Σ amp·cos(j·q + phase)`.
    #[new]
    fn new(a: f64, u: Vec<(i64, f64, f64)>) -> PyResult<Self> {
        let harmonics = u.into_iter().map(|(j, amp, ph)| Harmonic::new(vec![j], amp, ph)).collect();
        let u = core_lib::TrigSeries::new(1, harmonics).map_err(py_err)?;
        Ok(Self { inner: PendulumModel::new(a, u, 0.0).map_err(py_err)? })
    }

    /// Averages `potential` near the resonance `⟨k, y⟩ = 2πk₀` of the
    /// standard twist map.
    #[staticmethod]
    #[pyo3(signature = (potential, k, k0=0, eps=0.0))]
    fn reduce(potential: &PyTrigSeries, k: Vec<i64>, k0: i64, eps: f64) -> PyResult<Self> {
        let geometry = SingleResonanceGeometry::standard(k, k0).map_err(py_err)?;
        let kk: i64 = geometry.k.iter().map(|c| c * c).sum();
        let base: Vec<f64> =
            geometry.k.iter().map(|&c| std::f64::consts::TAU * geometry.k0 as f64 * c as f64 / kk as f64).collect();
        Ok(Self { inner: pendulum::reduce(&potential.inner, &geometry, &base, eps).map_err(py_err)? })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn e_min(&self) -> f64 {
        self.inner.e_min
    }

    #[getter]
    fn e_sep(&self) -> f64 {
        self.inner.e_sep
    }

    fn energy(&self, p: f64, q: f64) -> f64 {
        self.inner.energy(p, q)
    }

    fn action(&self, e: f64) -> PyResult<f64> {
        self.inner.action(e).map_err(py_err)
    }

    fn period(&self, e: f64) -> PyResult<f64> {
        self.inner.period(e).map_err(py_err)
    }

    fn frequency(&self, e: f64) -> PyResult<f64> {
        self.inner.frequency(e).map_err(py_err)
    }

    fn in_oscillatory_domain(&self, p: f64, q: f64) -> bool {
        self.inner.in_oscillatory_domain(p, q)
    }

    /// Phase portrait with the given reduced points `(p, q)`.
    #[pyo3(signature = (points, levels=Vec::new()))]
    fn render(&self, points: Vec<(f64, f64)>, levels: Vec<f64>) -> PyResult<String> {
        svg::render_phase_portrait(&self.inner, &points, &levels, &RenderOptions::default()).map_err(py_err)
    }
}

/// Monte Carlo class census over the full action box; returns JSON.
#[pyfunction]
#[pyo3(signature = (potential, eps, samples, seed, steps=200_000, stride=20, workers=1))]
fn run_survey(
    potential: &PyTrigSeries,
    eps: Vec<f64>,
    samples: usize,
    seed: u64,
    steps: u64,
    stride: u64,
    workers: usize,
) -> PyResult<String> {
    let mut c = SurveyConfig::new(potential.inner.clone(), eps, samples, seed);
    c.steps = steps;
    c.stride = stride;
    c.workers = workers.max(1);
    json(&survey::run_survey(&c).map_err(py_err)?)
}

/// Inequality ledger for the KAM constants; searches the free constants
/// when `search` is set. Returns JSON.
#[pyfunction]
#[pyo3(signature = (n=2, search=true, m=kamcheck::DEFAULT_M))]
fn kam_ledger(n: usize, search: bool, m: usize) -> PyResult<String> {
    let mut c = KamConstants::with_n(n);
    c.c_s = (16 * n + 25) as f64;
    if search {
        json(&kamcheck::search_constants(&c, m).map_err(py_err)?)
    } else {
        json(&kamcheck::check_inequalities(&c, m).map_err(py_err)?)
    }
}

/// Partial sums of the excised measure; returns JSON.
#[pyfunction]
#[pyo3(signature = (n=2, m=kamcheck::DEFAULT_M))]
fn measure_sum(n: usize, m: usize) -> PyResult<String> {
    json(&kamcheck::measure_sum(&KamConstants::with_n(n), m).map_err(py_err)?)
}

/// Validates a run configuration; returns the list of error messages.
#[pyfunction]
fn check_config(text: &str) -> Vec<String> {
    match core_lib::config::parse_config(text) {
        Ok(_) => Vec::new(),
        Err(errs) => errs.iter().map(ToString::to_string).collect(),
    }
}

/// Runs the command-line interface with `argv` (without program name).
#[pyfunction]
fn main(argv: Vec<String>) -> i32 {
    core_lib::cli::run(std::iter::once("kamtori".to_string()).chain(argv))
}

#[pymodule]
fn kamtori(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrigSeries>()?;
    m.add_class::<PyOrbit>()?;
    m.add_class::<PyPendulum>()?;
    m.add_function(wrap_pyfunction!(map_step, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_step, m)?)?;
    m.add_function(wrap_pyfunction!(iterate, m)?)?;
    m.add_function(wrap_pyfunction!(detect_resonances, m)?)?;
    m.add_function(wrap_pyfunction!(run_survey, m)?)?;
    m.add_function(wrap_pyfunction!(kam_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(measure_sum, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
