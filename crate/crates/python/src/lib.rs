//! Python bindings: grids, forward model, noise, reconstruction and the
//! experiment drivers. Fields cross the boundary as flat lists (x fastest).

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use isp_core::allatonce::{self, DirectStrategy};
use isp_core::experiment::{self, BenchConfig, BetaRule, CsvRecord, ExampleSpec, ExperimentConfig};
use isp_core::forward;
use isp_core::grid::{build_laplacian, Field};
use isp_core::pint::InverseProblem;
use isp_core::timedisc::{self, Method, RegularizationSpec};

create_exception!(isp, IspError, PyException);

fn to_py(e: isp_core::Error) -> PyErr {
    use isp_core::Error as E;
    match e {
        E::Config(_) | E::InvalidGrid(_) | E::InvalidTimeGrid(_) | E::InvalidParameter(_) | E::LengthMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        e => IspError::new_err(e.to_string()),
    }
}

fn parse<T>(s: &str) -> PyResult<T>
where
    T: std::str::FromStr<Err = isp_core::Error>,
{
    s.parse::<T>().map_err(to_py)
}

/// Uniform grid on (0,π)^dim with m interior points per direction.
#[pyclass(frozen, skip_from_py_object, module = "isp")]
#[derive(Clone)]
struct SpatialGrid {
    inner: isp_core::grid::SpatialGrid,
}

#[pymethods]
impl SpatialGrid {
    #[new]
    fn new(dim: usize, m: usize) -> PyResult<Self> {
        Ok(Self { inner: isp_core::grid::SpatialGrid::new(dim, m).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    /// Node coordinates as (x, y) pairs in storage order; y = 0 in 1D.
    fn points(&self) -> Vec<(f64, f64)> {
        let (m, h) = (self.inner.m(), self.inner.h());
        let c = |i: usize| (i + 1) as f64 * h;
        if self.inner.dim() == 1 {
            (0..m).map(|i| (c(i), 0.0)).collect()
        } else {
            (0..m).flat_map(|j| (0..m).map(move |i| (c(i), c(j)))).collect()
        }
    }

    fn l2_norm(&self, v: Vec<f64>) -> PyResult<f64> {
        self.check(&v)?;
        Ok(self.inner.l2_norm(&v))
    }

    fn l2_distance(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(self.inner.l2_distance(&a, &b))
    }

    fn __repr__(&self) -> String {
        format!("SpatialGrid(dim={}, m={})", self.inner.dim(), self.inner.m())
    }
}

impl SpatialGrid {
    fn check(&self, v: &[f64]) -> PyResult<()> {
        if v.len() != self.inner.dof() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.dof(), v.len())));
        }
        Ok(())
    }
}

#[pyclass(frozen, skip_from_py_object, module = "isp")]
#[derive(Clone)]
struct TimeGrid {
    inner: timedisc::TimeGrid,
}

#[pymethods]
impl TimeGrid {
    #[new]
    #[pyo3(signature = (t_final, n))]
    fn new(t_final: f64, n: usize) -> PyResult<Self> {
        Ok(Self { inner: timedisc::TimeGrid::new(t_final, n).map_err(to_py)? })
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn __repr__(&self) -> String {
        format!("TimeGrid(t_final={}, n={})", self.inner.t_final(), self.inner.n())
    }
}

fn or_zeros(v: Option<Vec<f64>>, len: usize) -> Vec<f64> {
    v.unwrap_or_else(|| vec![0.0; len])
}

/// Final state u(T) of the semi-discrete heat equation with source q(t)f.
/// `q` holds q(t_0..t_n) (default 1); scheme is "cn" or "be".
#[pyfunction]
#[pyo3(signature = (grid, timegrid, f, q=None, phi=None, scheme="cn"))]
fn forward_solve(
    py: Python<'_>,
    grid: &SpatialGrid,
    timegrid: &TimeGrid,
    f: Vec<f64>,
    q: Option<Vec<f64>>,
    phi: Option<Vec<f64>>,
    scheme: &str,
) -> PyResult<Vec<f64>> {
    let tg = timegrid.inner;
    let q = q.unwrap_or_else(|| vec![1.0; tg.n() + 1]);
    let phi = or_zeros(phi, grid.inner.dof());
    let lap = build_laplacian(&grid.inner);
    match scheme {
        "cn" => py.detach(|| forward::crank_nicolson_forward(&lap, &f, &q, &phi, &tg)).map_err(to_py),
        "be" => py
            .detach(|| forward::backward_euler_forward(&lap, &f, &q, &phi, &tg))
            .map(|mut traj| traj.pop().unwrap_or(phi))
            .map_err(to_py),
        other => Err(PyValueError::new_err(format!("unknown scheme '{other}' (cn | be)"))),
    }
}

/// Adds seeded uniform noise; returns (g_delta, delta) with delta the
/// realized discrete L2 distance.
#[pyfunction]
fn add_noise(grid: &SpatialGrid, g: Vec<f64>, epsilon: f64, seed: u64) -> PyResult<(Vec<f64>, f64)> {
    forward::add_noise(&grid.inner, &g, epsilon, seed).map_err(to_py)
}

/// Eigen-structure of the regularized time matrix.
#[pyfunction]
#[pyo3(signature = (n, beta, method="pqbvm", t_final=1.0, alpha=None))]
fn diagonalize(py: Python<'_>, n: usize, beta: f64, method: &str, t_final: f64, alpha: Option<f64>) -> PyResult<Py<PyDict>> {
    let method: Method = parse(method)?;
    let tg = timedisc::TimeGrid::new(t_final, n).map_err(to_py)?;
    let spec = match alpha {
        Some(a) => RegularizationSpec::with_alpha(method, a, beta, &tg),
        None => RegularizationSpec::new(method, beta, &tg),
    }
    .map_err(to_py)?;
    let tm = timedisc::TimeMatrix::new(tg, spec, None).map_err(to_py)?;
    let d = py.detach(|| timedisc::diagonalize(&tm)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("mu", d.mu.clone())?;
    out.set_item("lambda", d.lambda.clone())?;
    out.set_item("alpha", spec.alpha)?;
    out.set_item("c", spec.c)?;
    out.set_item("kappa1", d.kappa1)?;
    out.set_item("norm_v1", d.norm_v1())?;
    out.set_item("norm_w1", d.norm_w1())?;
    out.set_item("identity_defect", d.identity_defect())?;
    out.set_item("eigen_residual", d.eigen_residual(&tm))?;
    out.set_item("min_root_gap", d.min_root_gap())?;
    out.set_item("w_method", d.w_method.as_str())?;
    out.set_item("root_source", d.root_source.as_str())?;
    Ok(out.unbind())
}

/// Reconstructs f from final data. `q` holds q(t_1..t_n) (default 1).
/// solver: "auto" (PinT, direct for QBVM or on PinT failure), "pint",
/// "sparse_lu" or "block_elimination".
#[pyfunction]
#[pyo3(signature = (grid, timegrid, method, beta, g_delta, phi=None, q=None, solver="auto", threads=None, alpha=None))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    py: Python<'_>,
    grid: &SpatialGrid,
    timegrid: &TimeGrid,
    method: &str,
    beta: f64,
    g_delta: Vec<f64>,
    phi: Option<Vec<f64>>,
    q: Option<Vec<f64>>,
    solver: &str,
    threads: Option<usize>,
    alpha: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let method: Method = parse(method)?;
    let tg = timegrid.inner;
    let spec = match alpha {
        Some(a) => RegularizationSpec::with_alpha(method, a, beta, &tg),
        None => RegularizationSpec::new(method, beta, &tg),
    }
    .map_err(to_py)?;
    let phi: Field = or_zeros(phi, grid.inner.dof());
    let problem = InverseProblem::new(grid.inner.clone(), tg, spec, phi, g_delta, q).map_err(to_py)?;
    let lap = build_laplacian(&grid.inner);
    let (res, used) = py
        .detach(|| -> isp_core::Result<_> {
            match solver {
                "auto" => experiment::reconstruct(&problem, &lap, threads),
                "pint" => {
                    let d = timedisc::diagonalize(&problem.time_matrix()?)?;
                    let opts = isp_core::pint::PintOptions { threads, ..Default::default() };
                    Ok((isp_core::pint::solve_with(&problem, &lap, &d, &opts)?, "pint".to_string()))
                }
                "sparse_lu" => Ok((allatonce::solve_problem(&problem, DirectStrategy::SparseLu)?, solver.to_string())),
                "block_elimination" => {
                    Ok((allatonce::solve_problem(&problem, DirectStrategy::BlockElimination)?, solver.to_string()))
                }
                other => Err(isp_core::Error::Config(format!("unknown solver '{other}'"))),
            }
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("f", res.f)?;
    out.set_item("residual", res.residual)?;
    out.set_item("imag_ratio", res.imag_ratio)?;
    out.set_item("solver", used)?;
    out.set_item("alpha", spec.alpha)?;
    out.set_item("t_diag", res.timings.diag)?;
    out.set_item("t_total", res.timings.total)?;
    Ok(out.unbind())
}

/// CSV rows as dicts; numeric cells become floats, empty cells None.
fn rows_to_dicts<R: CsvRecord>(py: Python<'_>, rows: &[R]) -> PyResult<Vec<Py<PyDict>>> {
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            for (k, v) in R::header().iter().zip(r.record()) {
                if v.is_empty() {
                    d.set_item(*k, py.None())?;
                } else if let Ok(i) = v.parse::<i64>() {
                    d.set_item(*k, i)?;
                } else if let Ok(x) = v.parse::<f64>() {
                    d.set_item(*k, x)?;
                } else {
                    d.set_item(*k, v)?;
                }
            }
            Ok(d.unbind())
        })
        .collect()
}

fn example(example: &str) -> PyResult<ExampleSpec> {
    let id: u32 = example.parse().map_err(|_| PyValueError::new_err(format!("example must be 1..=5, got '{example}'")))?;
    ExampleSpec::preset(id).map_err(to_py)
}

/// (epsilon × seed) sweep on a preset example; one dict per point.
#[pyfunction]
#[pyo3(signature = (example_id, method, m, n, eps=vec![1e-2], seeds=vec![0], beta=None, relative=false, threads=None))]
#[allow(clippy::too_many_arguments)]
fn run_example(
    py: Python<'_>,
    example_id: u32,
    method: &str,
    m: usize,
    n: usize,
    eps: Vec<f64>,
    seeds: Vec<u64>,
    beta: Option<&str>,
    relative: bool,
    threads: Option<usize>,
) -> PyResult<Vec<Py<PyDict>>> {
    let mut cfg = ExperimentConfig::new(example(&example_id.to_string())?, parse(method)?, m, n);
    cfg.epsilons = eps;
    cfg.seeds = seeds;
    cfg.beta_rule = beta.map(parse::<BetaRule>).transpose()?;
    cfg.relative = relative;
    cfg.threads = threads;
    cfg.validate().map_err(to_py)?;
    let rows = py.detach(|| experiment::run_example(&cfg)).map_err(to_py)?;
    rows_to_dicts(py, &rows)
}

/// κ₁(V) over n × δ for α = 0 and α = α_*.
#[pyfunction]
fn cond_study(py: Python<'_>, n_list: Vec<usize>, delta_list: Vec<f64>) -> PyResult<Vec<Py<PyDict>>> {
    let rows = py.detach(|| experiment::cond_study(&n_list, &delta_list)).map_err(to_py)?;
    rows_to_dicts(py, &rows)
}

/// PinT (serial, parallel) vs sparse direct timings on one noisy draw.
#[pyfunction(name = "bench")]
#[pyo3(signature = (example_id, m, n, method="pqbvm", ceiling=None, threads=None, repeats=3))]
#[allow(clippy::too_many_arguments)]
fn bench_paths(
    py: Python<'_>,
    example_id: u32,
    m: usize,
    n: usize,
    method: &str,
    ceiling: Option<usize>,
    threads: Option<usize>,
    repeats: usize,
) -> PyResult<Vec<Py<PyDict>>> {
    let mut run = ExperimentConfig::new(example(&example_id.to_string())?, parse(method)?, m, n);
    run.threads = threads;
    run.validate().map_err(to_py)?;
    if repeats == 0 {
        return Err(PyValueError::new_err("repeats must be positive"));
    }
    let mut cfg = BenchConfig::new(run);
    cfg.repeats = repeats;
    if let Some(c) = ceiling {
        cfg.ceiling = c;
    }
    let rows = py.detach(|| experiment::bench(&cfg)).map_err(to_py)?;
    rows_to_dicts(py, &rows)
}

/// f_exact of a preset example sampled on the grid it defines.
#[pyfunction]
fn example_source(example_id: u32, m: usize) -> PyResult<(SpatialGrid, Vec<f64>)> {
    let ex = example(&example_id.to_string())?;
    let grid = ex.grid(m).map_err(to_py)?;
    let f = ex.f_exact(&grid);
    Ok((SpatialGrid { inner: grid }, f))
}

#[pymodule]
fn isp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IspError", m.py().get_type::<IspError>())?;
    m.add("SCHEMA_VERSION", experiment::SCHEMA_VERSION)?;
    m.add_class::<SpatialGrid>()?;
    m.add_class::<TimeGrid>()?;
    m.add_function(wrap_pyfunction!(forward_solve, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(diagonalize, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(run_example, m)?)?;
    m.add_function(wrap_pyfunction!(cond_study, m)?)?;
    m.add_function(wrap_pyfunction!(bench_paths, m)?)?;
    m.add_function(wrap_pyfunction!(example_source, m)?)?;
    Ok(())
}
