//! Python bindings: algebroids, model files and the main checks. Reports
//! come back as plain dicts with the same layout as the CLI's JSON.

use algebroid_helmholtz::model::Model;
use algebroid_helmholtz::morphism::{check_morphism, reduction_check};
use algebroid_helmholtz::sode::{self, MultiplierMap, SodeSection};
use algebroid_helmholtz::variational::{self, ReconstructionMode};
use algebroid_helmholtz::{parse, AtiyahData, Error, Expr, Lagrangian, LieAlgebroid, StructureConstants};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Model(_) | Error::Parse(_) | Error::Dimension(_) | Error::NotAntisymmetric { .. } | Error::Precondition(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn exprs(src: &[String]) -> PyResult<Vec<Expr>> {
    src.iter()
        .map(|s| parse(s).map_err(|e| PyValueError::new_err(e.to_string())))
        .collect()
}

fn table(rows: &[Vec<String>]) -> PyResult<Vec<Vec<Expr>>> {
    rows.iter().map(|r| exprs(r)).collect()
}

/// Serializes through JSON into Python dicts and lists.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `(c, a, b, value)` with 1-based indices and `a < b`.
type Bracket = (usize, usize, usize, f64);

fn constants(n: usize, brackets: &[Bracket]) -> PyResult<StructureConstants> {
    let mut c = StructureConstants::zero(n);
    for &(g, a, b, v) in brackets {
        if g == 0 || a == 0 || b == 0 || g > n || b > n || a >= b {
            return Err(PyValueError::new_err(format!(
                "bracket ({g}, {a}, {b}) needs 1-based indices with a < b <= {n}"
            )));
        }
        c.set(g - 1, a - 1, b - 1, v);
    }
    Ok(c)
}

#[pyclass(name = "Algebroid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAlgebroid {
    inner: LieAlgebroid,
}

#[pymethods]
impl PyAlgebroid {
    #[staticmethod]
    fn tangent(m: usize) -> Self {
        Self {
            inner: LieAlgebroid::tangent_bundle(m),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (n, brackets = Vec::new()))]
    fn lie_algebra(n: usize, brackets: Vec<Bracket>) -> PyResult<Self> {
        Ok(Self {
            inner: LieAlgebroid::lie_algebra(&constants(n, &brackets)?),
        })
    }

    /// `connection[a][i]` is the coefficient of `dx^i` in the `a`-th
    /// component of the connection form.
    #[staticmethod]
    #[pyo3(signature = (m, connection, brackets = Vec::new()))]
    fn atiyah(m: usize, connection: Vec<Vec<String>>, brackets: Vec<Bracket>) -> PyResult<Self> {
        let c = constants(connection.len(), &brackets)?;
        let data = AtiyahData::new(m, table(&connection)?, c).map_err(to_py)?;
        Ok(Self {
            inner: LieAlgebroid::atiyah(&data),
        })
    }

    /// `anchor` has `m` rows of `n` expressions; `brackets` lists
    /// `(c, a, b, expr)` with 1-based indices and `a < b`.
    #[staticmethod]
    #[pyo3(signature = (m, n, anchor, brackets = Vec::new()))]
    fn custom(m: usize, n: usize, anchor: Vec<Vec<String>>, brackets: Vec<(usize, usize, usize, String)>) -> PyResult<Self> {
        let mut br = Vec::with_capacity(brackets.len());
        for (g, a, b, v) in brackets {
            if g == 0 || a == 0 || b == 0 {
                return Err(PyValueError::new_err("bracket indices are 1-based"));
            }
            br.push((g - 1, a - 1, b - 1, exprs(&[v])?.remove(0)));
        }
        Ok(Self {
            inner: LieAlgebroid::new(m, n, table(&anchor)?, br).map_err(to_py)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Structure-equation residuals at base points.
    #[pyo3(signature = (points, tol = 1e-10))]
    fn validate<'py>(&self, py: Python<'py>, points: Vec<Vec<f64>>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.inner.validate_structure(&points, tol).map_err(to_py)?)
    }

    /// Anchor matrix at a base point, row-major `m × n`.
    fn anchor(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.anchor_at(&x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Algebroid(m={}, n={})", self.inner.m(), self.inner.n())
    }
}

/// Classifies `Γ` with multiplier `F` at points `(x, y)`.
#[pyfunction]
#[pyo3(signature = (algebroid, sode, multiplier, points, tol = 1e-8))]
fn classify<'py>(
    py: Python<'py>,
    algebroid: &PyAlgebroid,
    sode: Vec<String>,
    multiplier: Vec<String>,
    points: Vec<Vec<f64>>,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let h = sode::classify(
        &algebroid.inner,
        &SodeSection::new(exprs(&sode)?),
        &MultiplierMap::new(exprs(&multiplier)?),
        &points,
        tol,
    )
    .map_err(to_py)?;
    to_object(py, &h)
}

/// Components of the 1-form built from `Γ` and `F` at one point.
#[pyfunction]
fn theta(algebroid: &PyAlgebroid, sode: Vec<String>, multiplier: Vec<String>, point: Vec<f64>) -> PyResult<Vec<f64>> {
    let t = sode::theta_components(
        &algebroid.inner,
        &SodeSection::new(exprs(&sode)?),
        &MultiplierMap::new(exprs(&multiplier)?),
        &point,
    )
    .map_err(to_py)?;
    Ok(t.theta)
}

/// Values of the Euler-Lagrange SODE of `lagrangian` at one point.
#[pyfunction]
fn derive_sode(algebroid: &PyAlgebroid, lagrangian: &str, point: Vec<f64>) -> PyResult<Vec<f64>> {
    let l = Lagrangian::new(exprs(&[lagrangian.to_string()])?.remove(0));
    variational::sode_from_lagrangian_at(&algebroid.inner, &l, &point).map_err(to_py)
}

/// Euler-Lagrange residuals of a SODE for a Lagrangian at one point.
#[pyfunction]
fn el_residual(algebroid: &PyAlgebroid, lagrangian: &str, sode: Vec<String>, point: Vec<f64>) -> PyResult<Vec<f64>> {
    let l = Lagrangian::new(exprs(&[lagrangian.to_string()])?.remove(0));
    variational::el_residual(&algebroid.inner, &l, &SodeSection::new(exprs(&sode)?), &point).map_err(to_py)
}

/// Reconstructs a Lagrangian and returns its values at `eval_points`.
#[pyfunction]
#[pyo3(signature = (algebroid, sode, multiplier, basepoint, fiber_basepoint, check_points, eval_points))]
fn reconstruct(
    algebroid: &PyAlgebroid,
    sode: Vec<String>,
    multiplier: Vec<String>,
    basepoint: Vec<f64>,
    fiber_basepoint: Vec<f64>,
    check_points: Vec<Vec<f64>>,
    eval_points: Vec<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let e = &algebroid.inner;
    let mode = if e.m() == 0 {
        ReconstructionMode::ZeroAnchor
    } else {
        ReconstructionMode::FullRankSquare
    };
    let rec = variational::reconstruct_lagrangian(
        e,
        &SodeSection::new(exprs(&sode)?),
        &MultiplierMap::new(exprs(&multiplier)?),
        &basepoint,
        &fiber_basepoint,
        mode,
        &check_points,
    )
    .map_err(to_py)?;
    eval_points.iter().map(|p| rec.value(p).map_err(to_py)).collect()
}

/// A model file with its sampling and the checks the CLI runs on it.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Model::load(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, name = "model"))]
    fn from_toml(text: &str, name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::from_toml(text, name).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.tolerance
    }

    #[getter]
    fn algebroid(&self) -> PyAlgebroid {
        PyAlgebroid {
            inner: self.inner.system.algebroid.clone(),
        }
    }

    #[pyo3(signature = (seed = None, count = None))]
    fn sample(&self, seed: Option<u64>, count: Option<usize>) -> Vec<Vec<f64>> {
        self.inner.sample(seed, count)
    }

    #[pyo3(signature = (points = None))]
    fn classify<'py>(&self, py: Python<'py>, points: Option<Vec<Vec<f64>>>) -> PyResult<Bound<'py, PyAny>> {
        let m = &self.inner;
        let points = points.unwrap_or_else(|| m.sample(None, None));
        let h = sode::classify(
            &m.system.algebroid,
            m.sode().map_err(to_py)?,
            m.multiplier().map_err(to_py)?,
            &points,
            m.tolerance,
        )
        .map_err(to_py)?;
        to_object(py, &h)
    }

    /// Morphism residuals and the transfer of the conditions to the source.
    #[pyo3(signature = (points = None))]
    fn morphism_check<'py>(&self, py: Python<'py>, points: Option<Vec<Vec<f64>>>) -> PyResult<Bound<'py, PyAny>> {
        let m = &self.inner;
        let spec = m
            .morphism
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("missing [morphism] block"))?;
        let points = points.unwrap_or_else(|| m.sample(None, None));
        let base: Vec<Vec<f64>> = points.iter().map(|p| p[..m.system.algebroid.m()].to_vec()).collect();
        let morphism = check_morphism(&spec.morphism, &base, m.tolerance).map_err(to_py)?;
        let reduction = match (&spec.target.sode, &spec.target.multiplier) {
            (Some(g), Some(f)) => Some(reduction_check(&spec.morphism, g, f, &points, m.tolerance).map_err(to_py)?),
            _ => None,
        };
        to_object(py, &serde_json::json!({ "morphism": morphism, "reduction": reduction }))
    }
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let argv = std::iter::once("alghelm".to_string()).chain(args);
    algebroid_helmholtz::cli::run(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

#[pymodule]
fn algebroid_helmholtz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAlgebroid>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(derive_sode, m)?)?;
    m.add_function(wrap_pyfunction!(el_residual, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
