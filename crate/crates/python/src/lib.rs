//! Python bindings for the dissipacert certificate engine and optimizers.
//!
//! Vectors and matrices cross the boundary as `list[float]` and
//! `list[list[float]]`; every engine error raises `DissipacertError`.

use dissipacert::function_classes::{ComponentAssumption, FunctionClass};
use dissipacert::lmi_engine::{
    self, analytic_certificate, bisect_rate, katyusha_certificate, search_certificate, Certificate, PFamily,
    SearchOptions, SystemMatrices,
};
use dissipacert::optimizers::{self, MethodFamily, MethodSpec, SvrgOption};
use dissipacert::problems::{generate_problem, FiniteSumProblem, Regularizer};
use dissipacert::rate_bounds::{self, RateReport};
use dissipacert::supply_rates::{supply_rates_for, MultiplierSign, SupplyRate};
use dissipacert::validation::{self, InequalityReport};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(dissipacert_py, DissipacertError, PyValueError);

fn err(e: dissipacert::error::Error) -> PyErr {
    DissipacertError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(x: Vec<f64>, p: usize) -> PyResult<DVector<f64>> {
    if x.len() != p {
        return Err(DissipacertError::new_err(format!("vector has length {}, problem dimension is {p}", x.len())));
    }
    Ok(DVector::from_vec(x))
}

#[pyclass(name = "FunctionClass", module = "dissipacert_py", frozen)]
struct PyFunctionClass {
    inner: FunctionClass,
}

#[pymethods]
impl PyFunctionClass {
    #[new]
    #[pyo3(signature = (sigma, lipschitz, component_assumption = "smooth_convex", composite = false))]
    fn new(sigma: f64, lipschitz: f64, component_assumption: &str, composite: bool) -> PyResult<Self> {
        let assumption: ComponentAssumption = component_assumption.parse().map_err(err)?;
        let inner = FunctionClass::new(sigma, lipschitz, assumption, composite).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz
    }

    #[getter]
    fn component_assumption(&self) -> &'static str {
        self.inner.component_assumption.as_str()
    }

    #[getter]
    fn composite(&self) -> bool {
        self.inner.composite
    }

    fn condition_number(&self) -> f64 {
        self.inner.condition_number()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "FunctionClass(sigma={}, lipschitz={}, component_assumption='{}', composite={})",
            c.sigma,
            c.lipschitz,
            c.component_assumption,
            if c.composite { "True" } else { "False" }
        )
    }
}

#[pyclass(name = "MethodSpec", module = "dissipacert_py", frozen)]
struct PyMethodSpec {
    inner: MethodSpec,
}

#[pymethods]
impl PyMethodSpec {
    #[staticmethod]
    fn sg(eta: f64, steps: usize) -> PyResult<Self> {
        Ok(Self { inner: MethodSpec::sg(eta, steps).map_err(err)? })
    }

    #[staticmethod]
    fn svrg_i(eta: f64, m: usize) -> PyResult<Self> {
        Ok(Self { inner: MethodSpec::svrg(SvrgOption::I, eta, m).map_err(err)? })
    }

    #[staticmethod]
    fn svrg_ii(eta: f64, m: usize) -> PyResult<Self> {
        Ok(Self { inner: MethodSpec::svrg(SvrgOption::II, eta, m).map_err(err)? })
    }

    #[staticmethod]
    fn katyusha(m: usize, tau1: f64, tau2: f64, alpha: f64, zeta: f64) -> PyResult<Self> {
        Ok(Self { inner: MethodSpec::katyusha(m, tau1, tau2, alpha, zeta).map_err(err)? })
    }

    #[staticmethod]
    fn katyusha_recipe(function_class: &PyFunctionClass, m: usize) -> PyResult<Self> {
        Ok(Self { inner: MethodSpec::katyusha_recipe(&function_class.inner, m).map_err(err)? })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.cli_name()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn tau1(&self) -> f64 {
        self.inner.tau1
    }

    #[getter]
    fn tau2(&self) -> f64 {
        self.inner.tau2
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.zeta
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        match s.family {
            MethodFamily::Katyusha => format!(
                "MethodSpec.katyusha(m={}, tau1={}, tau2={}, alpha={}, zeta={})",
                s.m, s.tau1, s.tau2, s.alpha, s.zeta
            ),
            f => format!("MethodSpec({}, eta={}, m={})", f.cli_name(), s.eta, s.m),
        }
    }
}

#[pyclass(name = "Certificate", module = "dissipacert_py", frozen)]
struct PyCertificate {
    inner: Certificate,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn verified(&self) -> bool {
        self.inner.verified
    }

    #[getter]
    fn rho_sq(&self) -> f64 {
        self.inner.instance.rho_sq
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.instance.lambdas.clone()
    }

    #[getter]
    fn pbar(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.instance.pbar)
    }

    #[getter]
    fn lhs(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.lhs)
    }

    #[getter]
    fn lhs_max_eig(&self) -> f64 {
        self.inner.lhs_max_eig
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.tolerance
    }

    #[getter]
    fn derived_rate(&self) -> Option<f64> {
        self.inner.derived_rate
    }

    #[getter]
    fn failures(&self) -> Vec<String> {
        self.inner.failures.clone()
    }

    #[getter]
    fn supply_rate_names(&self) -> Vec<String> {
        self.inner.instance.supply_rates.iter().map(|r| r.name.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(verified={}, rho_sq={}, lhs_max_eig={:e})",
            if self.inner.verified { "True" } else { "False" },
            self.inner.instance.rho_sq,
            self.inner.lhs_max_eig
        )
    }
}

#[pyclass(name = "RateReport", module = "dissipacert_py", frozen)]
struct PyRateReport {
    inner: RateReport,
}

#[pymethods]
impl PyRateReport {
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn rho_sq(&self) -> f64 {
        self.inner.rho_sq
    }

    #[getter]
    fn terms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for t in &self.inner.terms {
            d.set_item(&t.name, t.value)?;
        }
        Ok(d)
    }

    fn contracting(&self) -> bool {
        self.inner.contracting()
    }

    fn __repr__(&self) -> String {
        format!("RateReport(family='{}', nu={}, rho_sq={})", self.inner.family, self.inner.nu, self.inner.rho_sq)
    }
}

#[pyclass(name = "Problem", module = "dissipacert_py", frozen)]
struct PyProblem {
    inner: FiniteSumProblem,
}

#[pymethods]
impl PyProblem {
    /// Random quadratic finite sum in `function_class`; composite classes get
    /// `ψ(x) = (σ/2)‖x‖²` unless `regularizer_sigma` overrides the modulus.
    #[new]
    #[pyo3(signature = (function_class, n, p, seed = 0, regularizer_sigma = None))]
    fn new(function_class: &PyFunctionClass, n: usize, p: usize, seed: u64, regularizer_sigma: Option<f64>) -> PyResult<Self> {
        let fc = function_class.inner;
        let regularizer = match (fc.composite, regularizer_sigma) {
            (_, Some(s)) => Regularizer::quadratic_l2(s).map_err(err)?,
            (true, None) => Regularizer::quadratic_l2(fc.sigma).map_err(err)?,
            (false, None) => Regularizer::none(),
        };
        Ok(Self { inner: generate_problem(seed, n, p, fc, regularizer).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn x_star(&self) -> Vec<f64> {
        self.inner.x_star().iter().copied().collect()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.objective(&vector(x, self.inner.p())?))
    }

    fn suboptimality(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.suboptimality(&vector(x, self.inner.p())?))
    }

    fn component_gradient(&self, i: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = self.inner.component_gradient(i, &vector(x, self.inner.p())?).map_err(err)?;
        Ok(g.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

fn supply_rate_dict<'py>(py: Python<'py>, r: &SupplyRate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("xbar", rows(&r.xbar))?;
    let sign = match r.multiplier_sign {
        MultiplierSign::NonNegative => "non_negative",
        MultiplierSign::Free => "free",
    };
    d.set_item("multiplier_sign", sign)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &InequalityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("trials", r.trials)?;
    d.set_item("max_violation", r.max_violation)?;
    d.set_item("slack", r.slack)?;
    d.set_item("pass", r.pass)?;
    d.set_item("skipped", r.skipped.clone())?;
    Ok(d)
}

/// Supply rates of the method family under `function_class`.
#[pyfunction]
fn supply_rates<'py>(
    py: Python<'py>,
    function_class: &PyFunctionClass,
    spec: &PyMethodSpec,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rates = supply_rates_for(&function_class.inner, &spec.inner).map_err(err)?;
    rates.iter().map(|r| supply_rate_dict(py, r)).collect()
}

/// Closed-form certificate, checked numerically.
#[pyfunction]
#[pyo3(signature = (function_class, spec, tol = lmi_engine::DEFAULT_TOL))]
fn certify(function_class: &PyFunctionClass, spec: &PyMethodSpec, tol: f64) -> PyResult<PyCertificate> {
    Ok(PyCertificate { inner: analytic_certificate(&function_class.inner, &spec.inner, tol).map_err(err)? })
}

/// Katyusha certificate plus the closed-form feasibility test and its margin
/// (`None` outside the test's domain).
#[pyfunction]
#[pyo3(signature = (function_class, spec, tol = lmi_engine::DEFAULT_TOL))]
fn certify_katyusha(
    function_class: &PyFunctionClass,
    spec: &PyMethodSpec,
    tol: f64,
) -> PyResult<(PyCertificate, Option<bool>, Option<f64>)> {
    let k = katyusha_certificate(&function_class.inner, &spec.inner, tol).map_err(err)?;
    Ok((PyCertificate { inner: k.certificate }, k.predicate, k.margin))
}

/// Numerical search for `P̄` and multipliers at a fixed `ρ²`.
#[pyfunction]
#[pyo3(signature = (function_class, spec, rho_sq, tol = lmi_engine::DEFAULT_TOL, max_evaluations = 20000, seed = 0))]
fn search(
    function_class: &PyFunctionClass,
    spec: &PyMethodSpec,
    rho_sq: f64,
    tol: f64,
    max_evaluations: usize,
    seed: u64,
) -> PyResult<PyCertificate> {
    let rates = supply_rates_for(&function_class.inner, &spec.inner).map_err(err)?;
    let system = SystemMatrices::for_method(&spec.inner);
    let options = SearchOptions { tol, max_evaluations, seed, ..SearchOptions::default() };
    let outcome = search_certificate(&system, &rates, rho_sq, PFamily::default_for(spec.inner.family), &options)
        .map_err(err)?;
    Ok(PyCertificate { inner: outcome.certificate().clone() })
}

/// Smallest certifiable `ρ²` by bisection; returns `(rho_sq, certificate)`.
#[pyfunction]
#[pyo3(signature = (function_class, spec, tol_rho = 1e-6, tol = lmi_engine::DEFAULT_TOL))]
fn bisect(function_class: &PyFunctionClass, spec: &PyMethodSpec, tol_rho: f64, tol: f64) -> PyResult<(f64, PyCertificate)> {
    let rates = supply_rates_for(&function_class.inner, &spec.inner).map_err(err)?;
    let system = SystemMatrices::for_method(&spec.inner);
    let options = SearchOptions { tol, ..SearchOptions::default() };
    let b = bisect_rate(&system, &rates, PFamily::default_for(spec.inner.family), tol_rho, &options).map_err(err)?;
    Ok((b.rho_sq, PyCertificate { inner: b.certificate }))
}

/// Closed-form epoch rate of the method.
#[pyfunction]
fn closed_form_rate(function_class: &PyFunctionClass, spec: &PyMethodSpec) -> PyResult<PyRateReport> {
    Ok(PyRateReport { inner: rate_bounds::closed_form_rate(&function_class.inner, &spec.inner).map_err(err)? })
}

/// Runs `epochs` epochs from `x0`; one dict per epoch.
#[pyfunction]
#[pyo3(signature = (problem, spec, x0, epochs, seed = 0))]
fn run_epochs<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    spec: &PyMethodSpec,
    x0: Vec<f64>,
    epochs: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let x0 = vector(x0, problem.inner.p())?;
    let summaries = optimizers::run_epochs(&problem.inner, &spec.inner, &x0, epochs, seed).map_err(err)?;
    summaries
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("epoch", s.epoch)?;
            d.set_item("v_start", s.v_start)?;
            d.set_item("v_end", s.v_end)?;
            d.set_item("anchor_norm", s.anchor_norm)?;
            d.set_item("output_norm", s.output_norm)?;
            Ok(d)
        })
        .collect()
}

/// Monte Carlo check of the pointwise function-class inequalities.
#[pyfunction]
#[pyo3(signature = (problem, trials = 200, seed = 0))]
fn check_inequalities<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    validation::check_appendix_inequalities(&problem.inner, trials, seed)
        .iter()
        .map(|r| report_dict(py, r))
        .collect()
}

/// Checks the dissipation inequality of `certificate` along one traced epoch.
#[pyfunction]
#[pyo3(signature = (problem, spec, certificate, x0, seed = 0))]
fn check_dissipation<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    spec: &PyMethodSpec,
    certificate: &PyCertificate,
    x0: Vec<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let x0 = vector(x0, problem.inner.p())?;
    let trace = optimizers::run_epoch(&problem.inner, &spec.inner, &x0, seed, 0).map_err(err)?;
    let report = validation::check_dissipation_on_trace(&trace, &certificate.inner).map_err(err)?;
    report_dict(py, &report)
}

#[pymodule]
pub fn dissipacert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DissipacertError", m.py().get_type::<DissipacertError>())?;
    m.add_class::<PyFunctionClass>()?;
    m.add_class::<PyMethodSpec>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyRateReport>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(supply_rates, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(certify_katyusha, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(bisect, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_epochs, m)?)?;
    m.add_function(wrap_pyfunction!(check_inequalities, m)?)?;
    m.add_function(wrap_pyfunction!(check_dissipation, m)?)?;
    Ok(())
}
