//! Python bindings. The module is importable as `bpdp`.

use bpdp::chain::{self, ChainParams, Convention, DpOptions};
use bpdp::fitting::{self, PiDataset};
use bpdp::lattice_sim::{self, Event, Rectangle};
use bpdp::{matrix_analysis, special_functions, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyMemoryError, PyValueError};
use pyo3::prelude::*;

create_exception!(bpdp, BpdpError, PyValueError, "Invalid argument or failed computation.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ResourceCap { .. } => PyMemoryError::new_err(e.to_string()),
        other => BpdpError::new_err(other.to_string()),
    }
}

fn parse_convention(name: &str) -> PyResult<Convention> {
    match name {
        "exact" => Ok(Convention::HitExactly),
        "at-least" => Ok(Convention::HitAtLeast),
        _ => Err(BpdpError::new_err(format!("unknown convention {name:?}; use 'exact' or 'at-least'"))),
    }
}

/// Parameter `p` of the model with derived `q = -log(1 - p)`.
#[pyclass(frozen, name = "ModelParams")]
struct PyModelParams(bpdp::ModelParams);

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(p: f64) -> PyResult<Self> {
        bpdp::ModelParams::new(p).map(Self).map_err(to_py)
    }

    /// Parameters for `p = 2^-k`.
    #[staticmethod]
    fn from_log2_inv_p(k: u32) -> PyResult<Self> {
        bpdp::ModelParams::from_log2_inv_p(k).map(Self).map_err(to_py)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q()
    }

    #[getter]
    fn log_inv_p(&self) -> f64 {
        self.0.log_inv_p()
    }

    /// Default threshold `ceil(2 log(1/p) / p)`.
    fn default_threshold(&self) -> u32 {
        chain::default_threshold(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(p={:?})", self.0.p())
    }
}

#[pyclass(frozen, get_all, name = "PiResult")]
struct PyPiResult {
    p: f64,
    threshold: u32,
    convention: String,
    log_pi: f64,
    log_hit_prob: f64,
}

#[pymethods]
impl PyPiResult {
    fn __repr__(&self) -> String {
        format!(
            "PiResult(p={:?}, threshold={}, convention={:?}, log_pi={:?})",
            self.p, self.threshold, self.convention, self.log_pi
        )
    }
}

/// `log Π(p)` from the level-order dynamic program.
#[pyfunction]
#[pyo3(signature = (params, threshold=None, convention="exact", threads=1, prune_below=None))]
fn compute_pi(
    py: Python<'_>,
    params: &PyModelParams,
    threshold: Option<u32>,
    convention: &str,
    threads: usize,
    prune_below: Option<f64>,
) -> PyResult<PyPiResult> {
    let cp = ChainParams {
        model: params.0,
        threshold: threshold.unwrap_or_else(|| chain::default_threshold(&params.0)),
        convention: parse_convention(convention)?,
    };
    let opts = DpOptions { threads: threads.max(1), prune_below, ..DpOptions::default() };
    let r = py.detach(|| chain::compute_pi_with(&cp, &opts)).map_err(to_py)?;
    Ok(PyPiResult {
        p: cp.model.p(),
        threshold: cp.threshold,
        convention: cp.convention.label().to_string(),
        log_pi: r.log_pi,
        log_hit_prob: r.log_hit_prob.ln(),
    })
}

/// Log hitting probability by exhaustive path enumeration (small thresholds).
#[pyfunction]
#[pyo3(signature = (params, threshold, convention="exact"))]
fn brute_force_hit_prob(params: &PyModelParams, threshold: u32, convention: &str) -> PyResult<f64> {
    let cp = ChainParams { model: params.0, threshold, convention: parse_convention(convention)? };
    chain::brute_force_hit_prob(&cp).map(|l| l.ln()).map_err(to_py)
}

/// Sampled chain trajectory as a list of `(w, h, state)` tuples.
#[pyfunction]
#[pyo3(signature = (params, threshold, seed))]
fn sample_trajectory(params: &PyModelParams, threshold: u32, seed: u64) -> Vec<(u32, u32, &'static str)> {
    let cp = ChainParams { threshold, ..ChainParams::for_model(params.0) };
    chain::sample_trajectory(&cp, seed).into_iter().map(|s| (s.w, s.h, s.s.label())).collect()
}

macro_rules! scalar_fns {
    ($($name:ident),*) => {$(
        #[pyfunction]
        fn $name(z: f64) -> PyResult<f64> {
            special_functions::$name(z).map_err(to_py)
        }
    )*};
}

scalar_fns!(f, g, h, h2, beta, beta_bar, alpha, xi, xi_f);

/// Exact East-traversability probability of `R(a, b)`.
#[pyfunction]
fn traversability_prob(a: u32, b: u32, params: &PyModelParams) -> PyResult<f64> {
    special_functions::traversability_prob(a, b, &params.0).map_err(to_py)
}

/// The integral constants as `(name, value)` pairs.
#[pyfunction]
fn constants() -> PyResult<Vec<(&'static str, f64)>> {
    let c = special_functions::constants().map_err(to_py)?;
    Ok(vec![
        ("lambda1_f", c.lambda1_f),
        ("lambda1", c.lambda1),
        ("lambda2_f", c.lambda2_f),
        ("lambda2_2n", c.lambda2_2n),
    ])
}

/// The published `(k, log Π)` rows.
#[pyfunction]
fn table3() -> Vec<(u32, f64)> {
    fitting::TABLE3.to_vec()
}

#[pyclass(frozen, get_all, name = "FourParamFit")]
struct PyFourParamFit {
    alpha: f64,
    lambda1: f64,
    beta: f64,
    lambda2: f64,
    max_rel_residual: f64,
}

#[pymethods]
impl PyFourParamFit {
    fn __repr__(&self) -> String {
        format!(
            "FourParamFit(alpha={:?}, lambda1={:?}, beta={:?}, lambda2={:?})",
            self.alpha, self.lambda1, self.beta, self.lambda2
        )
    }
}

fn dataset(rows: Option<Vec<(u32, f64)>>) -> PyResult<PiDataset> {
    match rows {
        Some(rows) => PiDataset::new(rows).map_err(to_py),
        None => Ok(PiDataset::table3()),
    }
}

/// `log Π = λ₁ p^-α − λ₂ p^-β` through the last four rows (default: the
/// published table).
#[pyfunction]
#[pyo3(signature = (rows=None))]
fn fit_four_param(rows: Option<Vec<(u32, f64)>>) -> PyResult<PyFourParamFit> {
    let fit = fitting::fit_four_param(&dataset(rows)?).map_err(to_py)?;
    Ok(PyFourParamFit {
        alpha: fit.alpha,
        lambda1: fit.lambda1,
        beta: fit.beta,
        lambda2: fit.lambda2,
        max_rel_residual: fit.max_rel_residual,
    })
}

/// The regressions on the last three rows as a list of `(name, value)`.
#[pyfunction]
#[pyo3(signature = (rows=None))]
fn fit_regressions(rows: Option<Vec<(u32, f64)>>) -> PyResult<Vec<(&'static str, f64)>> {
    let d = dataset(rows)?;
    let first = fitting::fit_first_order(&d).map_err(to_py)?;
    let second = fitting::fit_second_order(&d).map_err(to_py)?;
    Ok(vec![
        ("alpha", first.alpha),
        ("lambda1", first.lambda1),
        ("lambda1_fixed_alpha", fitting::fit_first_order_fixed_alpha(&d).map_err(to_py)?),
        ("beta", second.beta),
        ("lambda2", second.lambda2),
        ("lambda2_fixed_beta", fitting::fit_second_order_fixed_beta(&d).map_err(to_py)?),
        ("third_order_exponent", fitting::fit_third_order(&d).map_err(to_py)?),
    ])
}

fn event(name: &str, inner: Option<(i64, i64, i64, i64)>) -> PyResult<Event> {
    let inner = inner.map(|(a, b, c, d)| Rectangle::new(a, b, c, d)).transpose().map_err(to_py)?;
    Event::parse(name, inner).ok_or_else(|| BpdpError::new_err(format!("unknown event {name:?}")))
}

/// Monte Carlo estimate of an event on `R(width, height)`; returns
/// `(p_hat, std_err)`.
#[pyfunction]
#[pyo3(signature = (name, width, height, params, samples, seed, inner=None))]
fn mc_estimate(
    py: Python<'_>,
    name: &str,
    width: i64,
    height: i64,
    params: &PyModelParams,
    samples: u64,
    seed: u64,
    inner: Option<(i64, i64, i64, i64)>,
) -> PyResult<(f64, f64)> {
    let ev = event(name, inner)?;
    let region = Rectangle::with_dims(width, height).map_err(to_py)?;
    let est = py.detach(|| lattice_sim::mc_estimate(&ev, &region, &params.0, samples, seed)).map_err(to_py)?;
    Ok((est.p_hat, est.std_err))
}

/// Exact event probability by enumeration of all configurations.
#[pyfunction]
#[pyo3(signature = (name, width, height, params, inner=None))]
fn exact_event_prob(
    name: &str,
    width: i64,
    height: i64,
    params: &PyModelParams,
    inner: Option<(i64, i64, i64, i64)>,
) -> PyResult<f64> {
    let ev = event(name, inner)?;
    let region = Rectangle::with_dims(width, height).map_err(to_py)?;
    lattice_sim::exact_event_prob(&ev, &region, &params.0).map_err(to_py)
}

/// Closure of the given infected sites under `model` ("frobose" or
/// "two-neighbour") inside the bounding box `(a, b, c, d)`.
#[pyfunction]
fn closure(model: &str, bbox: (i64, i64, i64, i64), sites: Vec<(i64, i64)>) -> PyResult<Vec<(i64, i64)>> {
    let model = match model {
        "frobose" => lattice_sim::Model::Frobose,
        "two-neighbour" => lattice_sim::Model::TwoNeighbour,
        _ => return Err(BpdpError::new_err(format!("unknown model {model:?}"))),
    };
    let (a, b, c, d) = bbox;
    let bbox = Rectangle::new(a, b, c, d).map_err(to_py)?;
    let cfg = lattice_sim::LatticeConfiguration::from_sites(bbox, sites).map_err(to_py)?;
    Ok(lattice_sim::closure(model, &cfg).map_err(to_py)?.sites())
}

/// Spectral radius of the perturbed transfer matrix.
#[pyfunction]
fn perturbed_spectral_radius(p: f64) -> PyResult<f64> {
    matrix_analysis::perturbed_spectral_radius(p).map_err(to_py)
}

/// `ℳ^{2K+3}(0, 3)` as an exact integer.
#[pyfunction]
fn matrix_power_entry(k: u32) -> u128 {
    matrix_analysis::matrix_power_entry(k)
}

#[pymodule]
#[pyo3(name = "bpdp")]
fn bpdp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BpdpError", m.py().get_type::<BpdpError>())?;
    m.add("RNG_ALGORITHM", bpdp::RNG_ALGORITHM)?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyPiResult>()?;
    m.add_class::<PyFourParamFit>()?;
    m.add_function(wrap_pyfunction!(compute_pi, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_hit_prob, m)?)?;
    m.add_function(wrap_pyfunction!(sample_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(f, m)?)?;
    m.add_function(wrap_pyfunction!(g, m)?)?;
    m.add_function(wrap_pyfunction!(h, m)?)?;
    m.add_function(wrap_pyfunction!(h2, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(beta_bar, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(xi_f, m)?)?;
    m.add_function(wrap_pyfunction!(traversability_prob, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(table3, m)?)?;
    m.add_function(wrap_pyfunction!(fit_four_param, m)?)?;
    m.add_function(wrap_pyfunction!(fit_regressions, m)?)?;
    m.add_function(wrap_pyfunction!(mc_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_event_prob, m)?)?;
    m.add_function(wrap_pyfunction!(closure, m)?)?;
    m.add_function(wrap_pyfunction!(perturbed_spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_power_entry, m)?)?;
    Ok(())
}
