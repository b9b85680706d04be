//! Python bindings. Matrices cross the boundary as lists of rows; symbols stay
//! 1-based as everywhere else.

use std::collections::BTreeMap;

use hmmr_core::examples::{fox_rubin as fox_rubin_model, published_check, FoxRubinParams};
use hmmr_core::hankel::{build_hankel as hankel_matrix, numerical_rank as rank_report};
use hmmr_core::io::{model_to_json, parse_model};
use hmmr_core::sim::{empirical_tensor as empirical, sample_path as sample};
use hmmr_core::{
    Error, Hmm, Model as CoreModel, ObservationMap, QuasiRealization, Realization, Reduction as CoreReduction,
    ReductionKind, Tensor3, Tolerances,
};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(hmmr, NumericalError, PyArithmeticError, "A numerical certification failed.");
create_exception!(hmmr, HmmrError, PyException, "Unclassified library error.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io(_) => PyOSError::new_err(msg),
        Error::Parse(_)
        | Error::Dimension(_)
        | Error::SymbolOutOfRange { .. }
        | Error::InvalidModel(_)
        | Error::InvalidParams(_)
        | Error::NotProper(_)
        | Error::PathTooShort { .. } => PyValueError::new_err(msg),
        Error::EigenvalueNotSimple { .. }
        | Error::AssumptionViolated { .. }
        | Error::ReductionInconsistent { .. }
        | Error::ClosureDiverged(_)
        | Error::SizeExceeded { .. } => NumericalError::new_err(msg),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn tolerances(res: Option<f64>, rank_factor: Option<f64>) -> Tolerances {
    let d = Tolerances::default();
    Tolerances {
        res: res.unwrap_or(d.res),
        rank_factor: rank_factor.unwrap_or(d.rank_factor),
        ..d
    }
}

fn json_value<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// An HMM or a quasi-realization.
#[pyclass(module = "hmmr", frozen)]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// Proper HMM from a column-stochastic `q` and a 1-based `phi`.
    #[staticmethod]
    fn hmm(q: Vec<Vec<f64>>, phi: Vec<usize>, d: usize) -> PyResult<Self> {
        let obs = ObservationMap::new(d, phi).map_err(to_py)?;
        let h = Hmm::new(matrix(&q)?, obs).map_err(to_py)?;
        Ok(Self { inner: CoreModel::Hmm(h) })
    }

    #[staticmethod]
    fn quasi(q: Vec<Vec<f64>>, phi: Vec<usize>, d: usize, rho: Vec<f64>) -> PyResult<Self> {
        let obs = ObservationMap::new(d, phi).map_err(to_py)?;
        let tol = Tolerances::default();
        let r = QuasiRealization::new(matrix(&q)?, obs, DVector::from_vec(rho), &tol).map_err(to_py)?;
        Ok(Self { inner: CoreModel::Quasi(r) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = parse_model(text, &Tolerances::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        model_to_json(&self.inner)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn phi(&self) -> Vec<usize> {
        self.inner.observation_map().phi().to_vec()
    }

    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        rows(self.inner.transition())
    }

    #[getter]
    fn is_proper(&self) -> bool {
        matches!(self.inner, CoreModel::Hmm(_))
    }

    /// The stationary (or given initial) vector.
    fn rho(&self) -> PyResult<Vec<f64>> {
        let rho = self.inner.initial_vector(&Tolerances::default()).map_err(to_py)?;
        Ok(rho.iter().copied().collect())
    }

    /// Probability of a chronological word of 1-based symbols.
    fn probability(&self, word: Vec<usize>) -> PyResult<f64> {
        let w = hmmr_core::Word::ascending(word);
        hmmr_core::string_probability(&self.inner, &w, &Tolerances::default()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let kind = if self.is_proper() { "hmm" } else { "quasi" };
        format!("Model({kind}, k={}, d={})", self.k(), self.d())
    }
}

/// A reduced quasi-realization with its transport matrix and residual checks.
#[pyclass(module = "hmmr", frozen)]
struct Reduction {
    inner: CoreReduction,
}

#[pymethods]
impl Reduction {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn trivial(&self) -> bool {
        self.inner.trivial
    }

    #[getter]
    fn transport(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.transport)
    }

    #[getter]
    fn residuals(&self) -> BTreeMap<String, f64> {
        self.inner.residuals.clone()
    }

    fn model(&self) -> Model {
        Model {
            inner: CoreModel::Quasi(self.inner.realization.clone()),
        }
    }

    fn __repr__(&self) -> String {
        format!("Reduction({}, order={})", self.kind(), self.order())
    }
}

/// Dense third-order tensor indexed `(future, past, now)`.
#[pyclass(module = "hmmr", frozen)]
struct Tensor {
    inner: Tensor3,
}

#[pymethods]
impl Tensor {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// Row-major over `(future, past, now)`.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn get(&self, future: usize, past: usize, now: usize) -> PyResult<f64> {
        let (a, b, c) = self.inner.dims();
        if future >= a || past >= b || now >= c {
            return Err(PyValueError::new_err("tensor index out of range"));
        }
        Ok(self.inner.get(future, past, now))
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn max_abs_diff(&self, other: &Tensor) -> PyResult<f64> {
        hmmr_core::max_abs_diff(&self.inner, &other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (a, b, c) = self.inner.dims();
        format!("Tensor({a}x{b}x{c})")
    }
}

#[pyfunction]
#[pyo3(signature = (model, tol_res=None, tol_rank=None))]
fn analyze<'py>(
    py: Python<'py>,
    model: &Model,
    tol_res: Option<f64>,
    tol_rank: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = hmmr_core::analyze(&model.inner, &tolerances(tol_res, tol_rank)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("k", r.k)?;
    out.set_item("d", r.d)?;
    out.set_item("dim_reachable", r.dim_reachable)?;
    out.set_item("dim_null", r.dim_null)?;
    out.set_item("dim_effective", r.dim_effective)?;
    out.set_item("unit_sum_ok", r.unit_sum_ok.clone())?;
    out.set_item("reachable_basis", r.reachable.as_ref().map(|b| rows(&b.t)))?;
    out.set_item("null_cobasis", rows(&r.null.t))?;
    out.set_item("effective_basis", r.effective.as_ref().map(|e| rows(&e.t)))?;
    out.set_item("warnings", r.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>())?;
    Ok(out)
}

/// `mode` is one of `"reachable"`, `"null"`, `"effective"`.
#[pyfunction]
#[pyo3(signature = (model, mode="effective", tol_res=None, tol_rank=None))]
fn reduce(model: &Model, mode: &str, tol_res: Option<f64>, tol_rank: Option<f64>) -> PyResult<Reduction> {
    let tol = tolerances(tol_res, tol_rank);
    let kind: ReductionKind = mode.parse().map_err(to_py)?;
    let inner = match kind {
        ReductionKind::Reachable => hmmr_core::reduce_reachable(&model.inner, &tol),
        ReductionKind::Null => hmmr_core::reduce_null(&model.inner, &tol),
        ReductionKind::Effective => hmmr_core::reduce_effective(&model.inner, &tol),
    }
    .map_err(to_py)?;
    Ok(Reduction { inner })
}

#[pyfunction]
fn build_tensor(model: &Model, n: usize) -> PyResult<Tensor> {
    let inner = hmmr_core::build_tensor(&model.inner, n, &Tolerances::default()).map_err(to_py)?;
    Ok(Tensor { inner })
}

/// The factor matrices `(A, B, C)` at depth `n`.
#[pyfunction]
fn build_factors(model: &Model, n: usize) -> PyResult<(Rows, Rows, Rows)> {
    let f = hmmr_core::build_factors(&model.inner, n, &Tolerances::default()).map_err(to_py)?;
    Ok((rows(&f.a), rows(&f.b), rows(&f.c)))
}

/// `A ⊗ B ⊗ C` for the factors of `model` at depth `n`.
#[pyfunction]
fn compose(model: &Model, n: usize) -> PyResult<Tensor> {
    let f = hmmr_core::build_factors(&model.inner, n, &Tolerances::default()).map_err(to_py)?;
    let inner = hmmr_core::compose(&f).map_err(to_py)?;
    Ok(Tensor { inner })
}

#[pyfunction]
fn build_hankel(model: &Model, depth: usize) -> PyResult<Vec<Vec<f64>>> {
    let h = hankel_matrix(&model.inner, depth, &Tolerances::default()).map_err(to_py)?;
    Ok(rows(&h.h))
}

/// Rank, singular values, threshold and gap of a matrix given as rows.
#[pyfunction]
#[pyo3(signature = (h, tol_rank=None))]
fn numerical_rank<'py>(py: Python<'py>, h: Vec<Vec<f64>>, tol_rank: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = rank_report(&matrix(&h)?, &tolerances(None, tol_rank));
    let out = PyDict::new(py);
    out.set_item("rank", r.rank)?;
    out.set_item("singular_values", r.singular_values.clone())?;
    out.set_item("threshold", r.threshold)?;
    out.set_item("tail_bound", r.tail_bound)?;
    out.set_item("gap", r.gap)?;
    Ok(out)
}

/// 1-based symbols of a seeded path.
#[pyfunction]
fn sample_path(model: &Model, length: usize, seed: u64) -> PyResult<Vec<usize>> {
    let hmm = model
        .inner
        .as_hmm()
        .ok_or_else(|| PyValueError::new_err("sampling needs a proper HMM"))?;
    let p = sample(hmm, length, seed, &Tolerances::default()).map_err(to_py)?;
    Ok(p.symbols)
}

/// Window frequencies of a seeded path, in the tensor layout.
#[pyfunction]
fn empirical_tensor(model: &Model, length: usize, seed: u64, n: usize) -> PyResult<Tensor> {
    let hmm = model
        .inner
        .as_hmm()
        .ok_or_else(|| PyValueError::new_err("sampling needs a proper HMM"))?;
    let p = sample(hmm, length, seed, &Tolerances::default()).map_err(to_py)?;
    let e = empirical(&p, n).map_err(to_py)?;
    Ok(Tensor { inner: e.tensor })
}

#[pyfunction]
#[pyo3(signature = (m, lam))]
fn fox_rubin(m: usize, lam: f64) -> PyResult<Model> {
    let params = FoxRubinParams::new(m, lam).map_err(to_py)?;
    let h = fox_rubin_model(params).map_err(to_py)?;
    Ok(Model { inner: CoreModel::Hmm(h) })
}

/// Audit of the published closed-form reduced system, as a dict.
#[pyfunction]
#[pyo3(name = "published_check")]
fn published_check_py<'py>(py: Python<'py>, m: usize, lam: f64) -> PyResult<Bound<'py, PyAny>> {
    let tol = Tolerances::default();
    let params = FoxRubinParams::new(m, lam).map_err(to_py)?;
    let c = published_check(params, &tol).map_err(to_py)?;
    let text = serde_json_string(&c)?;
    let out = json_value(py, &text)?;
    out.set_item("defining_relations_hold", c.defining_relations_hold(&tol))?;
    Ok(out)
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| HmmrError::new_err(e.to_string()))
}

#[pymodule]
fn hmmr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Reduction>()?;
    m.add_class::<Tensor>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(build_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(build_factors, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(build_hankel, m)?)?;
    m.add_function(wrap_pyfunction!(numerical_rank, m)?)?;
    m.add_function(wrap_pyfunction!(sample_path, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(fox_rubin, m)?)?;
    m.add_function(wrap_pyfunction!(published_check_py, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("HmmrError", m.py().get_type::<HmmrError>())?;
    Ok(())
}
