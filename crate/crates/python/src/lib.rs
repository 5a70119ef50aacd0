//! Python bindings: graphs, proximal operators, scenarios and runs.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ssdn::cli::{self, OutputPaths};
use ssdn::diagnostics::{self, analytic_certificate, residual_report};
use ssdn::{Dynamics, Edge, ProximableFunction, SystemState, Variant};

fn py_err(e: ssdn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Rows = Vec<Vec<f64>>;

fn rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Weighted undirected graph with 1-based edge indices.
#[pyclass(name = "Graph", module = "ssdn_py", frozen)]
struct PyGraph(ssdn::Graph);

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let edges: Vec<Edge> = edges.into_iter().map(|(i, j, weight)| Edge { i, j, weight }).collect();
        ssdn::Graph::from_edges(n, &edges).map(PyGraph).map_err(py_err)
    }

    #[staticmethod]
    fn path(n: usize) -> Self {
        PyGraph(ssdn::Graph::path(n))
    }

    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    fn is_connected(&self) -> bool {
        self.0.is_connected()
    }

    fn laplacian(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.0.laplacian().map_err(py_err)?.matrix))
    }

    /// Ascending Laplacian eigenvalues.
    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        let l = self.0.laplacian().map_err(py_err)?;
        l.eigenvalues()
            .map(|v| v.to_vec())
            .ok_or_else(|| PyValueError::new_err("graph too large for a dense spectrum"))
    }

    fn lambda_max(&self) -> PyResult<f64> {
        Ok(self.0.laplacian().map_err(py_err)?.lambda_max)
    }
}

/// A proximable term: zero, anchored weighted L1 norm, ball or box indicator.
#[pyclass(name = "Prox", module = "ssdn_py", frozen)]
struct PyProx(ProximableFunction);

#[pymethods]
impl PyProx {
    #[staticmethod]
    fn zero() -> Self {
        PyProx(ProximableFunction::Zero)
    }

    #[staticmethod]
    fn l1_anchor(anchor: Vec<f64>, weight: f64) -> PyResult<Self> {
        ProximableFunction::l1_anchor(anchor, weight).map(PyProx).map_err(py_err)
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        ProximableFunction::ball(center, radius).map(PyProx).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        ProximableFunction::boxed(lo, hi).map(PyProx).map_err(py_err)
    }

    fn kind(&self) -> &'static str {
        self.0.kind_name()
    }

    fn value(&self, x: Vec<f64>) -> f64 {
        self.0.value(&x)
    }

    fn prox(&self, eta: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.0.prox(&eta).map_err(py_err)?.point)
    }

    fn envelope(&self, eta: Vec<f64>) -> PyResult<f64> {
        self.0.envelope(&eta).map_err(py_err)
    }

    fn moreau_gradient(&self, eta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.moreau_gradient(&eta).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Final-state summary of a run plus the recorded trajectory.
#[pyclass(name = "RunResult", module = "ssdn_py", frozen)]
struct PyRunResult {
    summary: cli::RunSummary,
    trajectory: ssdn::Trajectory,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn verdict(&self) -> &'static str {
        match self.summary.verdict {
            cli::Verdict::Converged => "converged",
            cli::Verdict::HorizonReached => "horizon-reached",
            cli::Verdict::Diverged { .. } => "diverged",
        }
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.summary.exit_code()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.summary.steps
    }

    #[getter]
    fn final_x(&self) -> Vec<Vec<f64>> {
        rows(&self.summary.final_state.x)
    }

    #[getter]
    fn final_cost(&self) -> f64 {
        self.summary.final_cost
    }

    #[getter]
    fn fixed_point(&self) -> f64 {
        self.summary.residuals.fixed_point
    }

    #[getter]
    fn consensus(&self) -> f64 {
        self.summary.residuals.consensus
    }

    #[getter]
    fn kkt(&self) -> f64 {
        self.summary.residuals.kkt
    }

    /// Recorded times.
    fn times(&self) -> Vec<f64> {
        self.trajectory.records.iter().map(|r| r.state.t).collect()
    }

    /// Recorded `(F, consensus, fixed_point)` per record.
    fn diagnostics(&self) -> Vec<(f64, f64, f64)> {
        self.trajectory
            .records
            .iter()
            .map(|r| (r.cost, r.consensus, r.fixed_point))
            .collect()
    }

    fn lyapunov(&self) -> Option<Vec<f64>> {
        self.trajectory.records.iter().map(|r| r.lyapunov).collect()
    }

    /// Positions `x` of every record, shape `(records, n, q)`.
    fn positions(&self) -> Vec<Vec<Vec<f64>>> {
        self.trajectory.records.iter().map(|r| rows(&r.state.x)).collect()
    }

    fn to_csv(&self) -> String {
        cli::export::to_csv(&self.trajectory)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(verdict={:?}, steps={}, F={})",
            self.verdict(),
            self.summary.steps,
            self.summary.final_cost
        )
    }
}

/// A scenario: problem, parameters, initial state and integrator settings.
#[pyclass(name = "Scenario", module = "ssdn_py")]
struct PyScenario(cli::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cli::load_scenario(&path).map(PyScenario).map_err(py_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        cli::Scenario::from_toml_str(text).map(PyScenario).map_err(py_err)
    }

    /// Bundled scenario by name: `paper_sec6` or `single_agent`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        cli::Scenario::builtin(name)
            .map(PyScenario)
            .ok_or_else(|| PyValueError::new_err(format!("unknown bundled scenario {name:?}")))
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn variant(&self) -> &'static str {
        match self.0.variant {
            Variant::Smooth => "smooth",
            Variant::Subgradient => "subgradient",
        }
    }

    #[setter]
    fn set_variant(&mut self, v: &str) -> PyResult<()> {
        self.0.variant = match v {
            "smooth" => Variant::Smooth,
            "subgradient" => Variant::Subgradient,
            other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
        };
        Ok(())
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.integrator.h
    }

    #[setter]
    fn set_h(&mut self, h: f64) {
        self.0.integrator.h = h;
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.0.integrator.t_end
    }

    #[setter]
    fn set_t_end(&mut self, t: f64) {
        self.0.integrator.t_end = t;
    }

    #[getter]
    fn stride(&self) -> usize {
        self.0.output.stride
    }

    #[setter]
    fn set_stride(&mut self, k: usize) {
        self.0.output.stride = k;
    }

    fn graph(&self) -> PyResult<PyGraph> {
        self.0.graph().map(PyGraph).map_err(py_err)
    }

    /// `(alpha, gamma)` after resolving `auto` parameters.
    fn params(&self) -> PyResult<(f64, f64)> {
        let p = self.0.algorithm_params().map_err(py_err)?;
        Ok((p.alpha, p.gamma))
    }

    /// `F(x)` at the stacked positions `x` (one row per agent).
    fn total_cost(&self, x: Vec<Vec<f64>>) -> PyResult<f64> {
        let p = self.0.problem().map_err(py_err)?;
        let x = stack(&x, p.agent_count(), p.dim())?;
        Ok(p.evaluate_total_cost(x.view()))
    }

    /// Runs the scenario; `out` optionally names a trajectory CSV to write.
    #[pyo3(signature = (out=None))]
    fn run(&self, py: Python<'_>, out: Option<PathBuf>) -> PyResult<PyRunResult> {
        let paths = OutputPaths {
            trajectory: out,
            certificate: None,
        };
        let (summary, trajectory) = py.detach(|| cli::run(&self.0, &paths)).map_err(py_err)?;
        Ok(PyRunResult { summary, trajectory })
    }

    /// Residuals `(kkt, fixed_point, consensus)` of the analytic certificate at `point`.
    fn certificate_residuals(&self, point: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let p = self.0.problem().map_err(py_err)?;
        let d = Dynamics::new(&p, self.0.algorithm_params().map_err(py_err)?).map_err(py_err)?;
        let c = analytic_certificate(&d, &point).map_err(py_err)?;
        let r = residual_report(&d, &c.as_state(), Some(&c)).map_err(py_err)?;
        Ok((r.kkt, r.fixed_point, r.consensus))
    }

    /// `‖Lx‖` for stacked positions.
    fn consensus_residual(&self, x: Vec<Vec<f64>>) -> PyResult<f64> {
        let g = self.0.graph().map_err(py_err)?;
        let x = stack(&x, g.node_count(), self.0.dim())?;
        Ok(diagnostics::consensus_residual(x.view(), &g))
    }

    /// Smooth vector field `(dx, dz, dv)` at a state.
    fn vector_field(
        &self,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> PyResult<(Rows, Rows, Rows)> {
        let p = self.0.problem().map_err(py_err)?;
        let (n, q) = (p.agent_count(), p.dim());
        let s = SystemState {
            x: stack(&x, n, q)?,
            z: stack(&z, n, q)?,
            v: stack(&v, n, q)?,
            t: 0.0,
        };
        let d = Dynamics::new(&p, self.0.algorithm_params().map_err(py_err)?).map_err(py_err)?;
        let f = d.vector_field(&s).map_err(py_err)?;
        Ok((rows(&f.dx), rows(&f.dz), rows(&f.dv)))
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, variant={:?})", self.0.name, self.variant())
    }
}

fn stack(x: &[Vec<f64>], n: usize, q: usize) -> PyResult<Array2<f64>> {
    if x.len() != n || x.iter().any(|r| r.len() != q) {
        return Err(PyValueError::new_err(format!("expected {n} rows of length {q}")));
    }
    Ok(Array2::from_shape_fn((n, q), |(i, k)| x[i][k]))
}

#[pymodule]
fn ssdn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyProx>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    Ok(())
}
