//! Python bindings: grids, potentials, divergences, cumulant tables and flow runs.

use gradflow::potential::TrigKind;
use gradflow::{
    Builtin, CumulantTable, Error, FlowKind, FlowState, FlowTrace, Grid, LogDensity, Potential, RunConfig,
    TargetFields, TrigTerm,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Diverged { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<FlowKind> {
    kind.parse().map_err(to_py)
}

#[pyclass(name = "Grid", module = "pygradflow", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(Self { inner: Grid::new(n).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.spacing()
    }

    fn points(&self) -> Vec<f64> {
        self.inner.points().to_vec()
    }

    fn quadrature(&self, values: Vec<f64>) -> PyResult<f64> {
        self.inner.quadrature(&values).map_err(to_py)
    }

    fn gradient(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.periodic_gradient(&values).map_err(to_py)
    }

    fn laplacian(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.periodic_laplacian(&values).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={})", self.inner.len())
    }
}

#[pyclass(name = "Potential", module = "pygradflow", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPotential {
    inner: Potential,
}

#[pymethods]
impl PyPotential {
    /// One of V1, V2, Va, Vb, Vc, Vd.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let b: Builtin = name.parse().map_err(to_py)?;
        Ok(Self { inner: Potential::builtin(b) })
    }

    /// `terms` is a list of `(amplitude, "cos" | "sin", frequency)`.
    #[staticmethod]
    fn trig(terms: Vec<(f64, String, u32)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(a, kind, k)| match kind.as_str() {
                "cos" => Ok(TrigTerm { amplitude: a, kind: TrigKind::Cos, frequency: k }),
                "sin" => Ok(TrigTerm { amplitude: a, kind: TrigKind::Sin, frequency: k }),
                other => Err(PyValueError::new_err(format!("term kind must be 'cos' or 'sin', got {other:?}"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: Potential::trig(terms).map_err(to_py)? })
    }

    #[staticmethod]
    fn tabulated(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: Potential::tabulated(values).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name().map(str::to_string)
    }

    #[getter]
    fn is_numeric(&self) -> bool {
        self.inner.is_numeric()
    }

    fn eval(&self, grid: &PyGrid) -> PyResult<Vec<f64>> {
        self.inner.eval(&grid.inner).map_err(to_py)
    }

    fn grad(&self, grid: &PyGrid) -> PyResult<Vec<f64>> {
        self.inner.eval_grad(&grid.inner).map_err(to_py)
    }

    fn laplacian(&self, grid: &PyGrid) -> PyResult<Vec<f64>> {
        self.inner.eval_laplacian(&grid.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.inner.name().unwrap_or("<anonymous>"))
    }
}

#[pyclass(name = "LogDensity", module = "pygradflow", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLogDensity {
    inner: LogDensity,
}

#[pymethods]
impl PyLogDensity {
    /// The normalized Gibbs density `e^{-V} / Z` on `grid`.
    #[staticmethod]
    fn from_potential(potential: &PyPotential, grid: &PyGrid) -> PyResult<Self> {
        Ok(Self { inner: LogDensity::from_potential(&potential.inner, &grid.inner).map_err(to_py)? })
    }

    #[staticmethod]
    fn uniform(grid: &PyGrid) -> Self {
        Self { inner: LogDensity::uniform(&grid.inner) }
    }

    /// Normalizes arbitrary log-values.
    #[staticmethod]
    fn from_log_values(grid: &PyGrid, logq: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: LogDensity::from_unnormalized(&grid.inner, logq).map_err(to_py)? })
    }

    #[getter]
    fn logp(&self) -> Vec<f64> {
        self.inner.logp().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        self.inner.density()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }
}

#[pyfunction]
fn kl(rho: &PyLogDensity, pi: &PyLogDensity) -> PyResult<f64> {
    gradflow::kl(&rho.inner, &pi.inner).map_err(to_py)
}

#[pyfunction]
fn renyi(q: f64, rho: &PyLogDensity, pi: &PyLogDensity) -> PyResult<f64> {
    gradflow::renyi(q, &rho.inner, &pi.inner).map_err(to_py)
}

#[pyfunction]
fn chi2(rho: &PyLogDensity, pi: &PyLogDensity) -> PyResult<f64> {
    gradflow::chi2(&rho.inner, &pi.inner).map_err(to_py)
}

/// `μ_τ ∝ ρ₀^{1-τ} π^τ`.
#[pyfunction]
fn annealing_path(rho0: &PyLogDensity, pi: &PyLogDensity, tau: f64) -> PyResult<PyLogDensity> {
    Ok(PyLogDensity { inner: gradflow::annealing_path(&rho0.inner, &pi.inner, tau).map_err(to_py)? })
}

/// Exact Fisher-Rao flow at time `t`.
#[pyfunction]
fn fr_exact(rho0: &PyLogDensity, pi: &PyLogDensity, t: f64) -> PyResult<PyLogDensity> {
    Ok(PyLogDensity { inner: gradflow::fr_exact(&rho0.inner, &pi.inner, t).map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (rho0, pi, alpha = 0.0))]
fn check_assumptions<'py>(
    py: Python<'py>,
    rho0: &PyLogDensity,
    pi: &PyLogDensity,
    alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = gradflow::check_assumptions(&rho0.inner, &pi.inner, alpha).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha", r.alpha)?;
    d.set_item("a2_log_margin", r.a2_log_margin)?;
    d.set_item("a2_holds", r.a2_holds)?;
    d.set_item("a1_potential_mean", r.a1_potential_mean)?;
    d.set_item("a1_holds", r.a1_holds)?;
    d.set_item("m_constant", r.m_constant)?;
    Ok(d)
}

#[pyclass(name = "CumulantTable", module = "pygradflow", frozen, skip_from_py_object)]
pub struct PyCumulantTable {
    inner: CumulantTable,
}

#[pymethods]
impl PyCumulantTable {
    #[new]
    #[pyo3(signature = (rho0, pi, max_order = 8))]
    fn new(rho0: &PyLogDensity, pi: &PyLogDensity, max_order: usize) -> PyResult<Self> {
        Ok(Self { inner: CumulantTable::build(&rho0.inner, &pi.inner, max_order).map_err(to_py)? })
    }

    #[getter]
    fn kappas(&self) -> Vec<f64> {
        self.inner.kappas().to_vec()
    }

    fn kappa(&self, n: usize) -> PyResult<f64> {
        if n == 0 || n > self.inner.max_order() {
            return Err(PyValueError::new_err(format!("n must lie in 1..={}", self.inner.max_order())));
        }
        Ok(self.inner.kappa(n))
    }

    fn cgf(&self, z: f64) -> f64 {
        self.inner.cgf(z)
    }

    fn kl_closed_form(&self, tau: f64) -> PyResult<f64> {
        self.inner.kl_closed_form(tau).map_err(to_py)
    }

    fn renyi_closed_form(&self, q: f64, tau: f64) -> PyResult<f64> {
        self.inner.renyi_closed_form(q, tau).map_err(to_py)
    }

    fn kl_series(&self, t: f64, order: usize) -> PyResult<f64> {
        self.inner.kl_series(t, order).map_err(to_py)
    }

    fn renyi_series(&self, q: f64, t: f64, order: usize) -> PyResult<f64> {
        self.inner.renyi_series(q, t, order).map_err(to_py)
    }
}

/// Step-by-step integrator for FR, W or WFR towards a fixed target.
#[pyclass(name = "FlowState", module = "pygradflow")]
pub struct PyFlowState {
    state: FlowState,
    fields: TargetFields,
}

#[pymethods]
impl PyFlowState {
    #[new]
    fn new(kind: &str, target: &PyPotential, init: &PyLogDensity, eps: f64) -> PyResult<Self> {
        let state = FlowState::new(parse_kind(kind)?, &init.inner, eps).map_err(to_py)?;
        let fields = TargetFields::new(&target.inner, state.grid()).map_err(to_py)?;
        Ok(Self { state, fields })
    }

    #[pyo3(signature = (steps = 1))]
    fn step(&mut self, steps: u64) -> PyResult<()> {
        for _ in 0..steps {
            self.state.step(&self.fields).map_err(to_py)?;
        }
        Ok(())
    }

    #[getter]
    fn time(&self) -> f64 {
        self.state.time()
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.state.steps()
    }

    fn log_values(&self) -> Vec<f64> {
        self.state.log_values().to_vec()
    }

    fn mass(&self) -> f64 {
        self.state.mass()
    }

    fn mass_drift(&self) -> f64 {
        self.state.mass_drift()
    }

    fn density(&self) -> PyResult<PyLogDensity> {
        Ok(PyLogDensity { inner: self.state.density().map_err(to_py)? })
    }
}

#[pyclass(name = "Trace", module = "pygradflow", frozen, skip_from_py_object)]
pub struct PyTrace {
    inner: FlowTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.meta.kind.label()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn kl(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.kl).collect()
    }

    #[getter]
    fn chi2(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.chi2).collect()
    }

    #[getter]
    fn mass_drift(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.mass_drift).collect()
    }

    /// Rényi divergence of order `q`, which must be one of the run's `q_list`.
    fn renyi(&self, q: f64) -> PyResult<Vec<f64>> {
        let i = self
            .inner
            .meta
            .q_list
            .iter()
            .position(|x| *x == q)
            .ok_or_else(|| PyValueError::new_err(format!("q = {q} was not recorded")))?;
        Ok(self.inner.rows.iter().map(|r| r.renyi[i]).collect())
    }

    #[getter]
    fn failed(&self) -> Option<(f64, String)> {
        self.inner.failed.clone()
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        self.inner.write_csv(std::io::BufWriter::new(f)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

/// Integrates one flow (or evaluates `FR_exact`) and records divergences every `record_dt`.
#[pyfunction]
#[pyo3(signature = (kind, target, init, n = 2000, eps = 1e-6, horizon = 1.0, record_dt = 0.01, q_list = vec![], renormalize_w = false, force_cfl = false))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    kind: &str,
    target: &PyPotential,
    init: &PyPotential,
    n: usize,
    eps: f64,
    horizon: f64,
    record_dt: f64,
    q_list: Vec<f64>,
    renormalize_w: bool,
    force_cfl: bool,
) -> PyResult<PyTrace> {
    let mut cfg = RunConfig::new(parse_kind(kind)?, target.inner.clone(), init.inner.clone());
    cfg.n = n;
    cfg.step_size = eps;
    cfg.horizon = horizon;
    cfg.record_dt = record_dt;
    cfg.q_list = q_list;
    cfg.renormalize_w = renormalize_w;
    cfg.force_cfl = force_cfl;
    py.detach(|| gradflow::run(&cfg))
        .map(|inner| PyTrace { inner })
        .map_err(|f| to_py(f.error))
}

/// `(slope, t1_snapped, t2_snapped)` of log KL between the recorded rows nearest `t1`, `t2`.
#[pyfunction]
fn slope(trace: &PyTrace, t1: f64, t2: f64) -> PyResult<(f64, f64, f64)> {
    let s = gradflow::slope(&trace.inner, t1, t2).map_err(to_py)?;
    Ok((s.slope, s.t1_snapped, s.t2_snapped))
}

#[pymodule]
pub fn pygradflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyLogDensity>()?;
    m.add_class::<PyCumulantTable>()?;
    m.add_class::<PyFlowState>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    m.add_function(wrap_pyfunction!(renyi, m)?)?;
    m.add_function(wrap_pyfunction!(chi2, m)?)?;
    m.add_function(wrap_pyfunction!(annealing_path, m)?)?;
    m.add_function(wrap_pyfunction!(fr_exact, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(slope, m)?)?;
    Ok(())
}
