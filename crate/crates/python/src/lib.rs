//! Python bindings. Coefficient vectors cross the boundary as
//! `{index: value}` dicts keyed by the text form of a multi-index
//! (`"3"`, `"3s"`, `"1.2s"` on the torus, `"j.k"` on the disk).

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use inverse_erm::basis::{BasisFamily, IndexDomain, MultiIndex};
use inverse_erm::cli::{self, Command};
use inverse_erm::config::ExperimentConfig;
use inverse_erm::estimators::{dense_minimize, dense_truncation, delta_net_minimize};
use inverse_erm::models::{simulate_white_noise, Observation, TruthSpec, WhiteNoiseObservation};
use inverse_erm::operators::SvdOperator;
use inverse_erm::risk::{self, EstimatorConfig, ObservationModel, TheoremOneConstants};
use inverse_erm::spaces::{self, CoefficientVector, LatticeNet};
use inverse_erm::Error;

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn parse_index(s: &str) -> PyResult<MultiIndex> {
    s.parse().map_err(py_err)
}

fn to_coefficients(basis: BasisFamily, map: BTreeMap<String, f64>) -> PyResult<CoefficientVector> {
    let entries = map
        .into_iter()
        .map(|(k, v)| Ok((parse_index(&k)?, v)))
        .collect::<PyResult<Vec<_>>>()?;
    CoefficientVector::from_entries(basis, entries).map_err(py_err)
}

fn from_coefficients(v: &CoefficientVector) -> BTreeMap<String, f64> {
    v.iter().map(|(j, x)| (j.to_string(), x)).collect()
}

fn domain_for(kind: &str, dim: usize) -> PyResult<IndexDomain> {
    match kind {
        "trig" => Ok(IndexDomain::Trig { dim }),
        "disk" => Ok(IndexDomain::Disk),
        other => Err(PyValueError::new_err(format!(
            "unknown domain `{other}`; expected `trig` or `disk`"
        ))),
    }
}

/// Sobolev-type ellipsoid `sum a_j^2 theta_j^2 <= L^2` with
/// `a_j = scale * max(|j|, 1)^s`.
#[pyclass(name = "Ellipsoid", frozen)]
struct PyEllipsoid {
    inner: spaces::Ellipsoid,
}

#[pymethods]
impl PyEllipsoid {
    #[new]
    #[pyo3(signature = (s, radius, domain = "trig", dim = 1, scale = 1.0))]
    fn new(s: f64, radius: f64, domain: &str, dim: usize, scale: f64) -> PyResult<Self> {
        let inner = spaces::Ellipsoid::polynomial(domain_for(domain, dim)?, s, radius)
            .and_then(|e| e.with_scale(scale))
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius()
    }

    fn weight(&self, index: &str) -> PyResult<f64> {
        Ok(self.inner.weight(&parse_index(index)?))
    }

    /// Indices of degree at most `m`.
    fn support(&self, m: u32) -> Vec<String> {
        self.inner.support(m).iter().map(|j| j.to_string()).collect()
    }

    fn truncation_level(&self, delta: f64) -> PyResult<u32> {
        spaces::truncation_level(&self.inner, delta).map_err(py_err)
    }

    fn weighted_norm(&self, theta: BTreeMap<String, f64>) -> PyResult<f64> {
        let theta = to_coefficients(self.inner.domain().family(), theta)?;
        Ok(self.inner.weighted_norm(&theta))
    }

    /// Natural log of the lattice delta-net size.
    fn net_log_cardinality(&self, delta: f64) -> PyResult<f64> {
        LatticeNet::new(&self.inner, delta)
            .and_then(|net| net.log_cardinality())
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Ellipsoid(s={}, radius={}, domain={:?})",
            self.inner.smoothness(),
            self.inner.radius(),
            self.inner.domain()
        )
    }
}

/// Operator diagonal in the basis with singular values `b_j`.
#[pyclass(name = "Operator", frozen)]
struct PyOperator {
    inner: SvdOperator,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    #[pyo3(signature = (q, dim = 1, scale = 1.0))]
    fn convolution(q: f64, dim: usize, scale: f64) -> PyResult<Self> {
        let inner = SvdOperator::convolution(IndexDomain::Trig { dim }, q, scale).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn radon2d() -> Self {
        Self {
            inner: SvdOperator::radon2d(),
        }
    }

    #[staticmethod]
    fn tomography2d() -> Self {
        Self {
            inner: SvdOperator::tomography2d(),
        }
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    fn singular_value(&self, index: &str) -> PyResult<f64> {
        self.inner.singular_value(&parse_index(index)?).map_err(py_err)
    }

    fn apply(&self, g: BTreeMap<String, f64>) -> PyResult<BTreeMap<String, f64>> {
        let g = to_coefficients(self.inner.domain().family(), g)?;
        Ok(from_coefficients(&self.inner.apply_a(&g).map_err(py_err)?))
    }

    fn apply_inverse(&self, h: BTreeMap<String, f64>) -> PyResult<BTreeMap<String, f64>> {
        let h = to_coefficients(self.inner.domain().family(), h)?;
        Ok(from_coefficients(&self.inner.apply_a_inverse(&h).map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        format!("Operator({:?}, q={})", self.inner.kind(), self.inner.q())
    }
}

fn white_noise(e: &PyEllipsoid, stats: BTreeMap<String, f64>, n: f64) -> PyResult<Observation> {
    let entries = stats
        .into_iter()
        .map(|(k, v)| Ok((parse_index(&k)?, v)))
        .collect::<PyResult<Vec<_>>>()?;
    WhiteNoiseObservation::from_stats(e.inner.domain().family(), entries, n, 0)
        .map(Observation::WhiteNoise)
        .map_err(py_err)
}

/// White-noise statistics `z_j` for indices up to degree `max_degree`.
#[pyfunction]
fn simulate(
    theta: BTreeMap<String, f64>,
    ellipsoid: &PyEllipsoid,
    operator: &PyOperator,
    n: u64,
    max_degree: u32,
    seed: u64,
) -> PyResult<BTreeMap<String, f64>> {
    let theta = to_coefficients(ellipsoid.inner.domain().family(), theta)?;
    let truth = TruthSpec::new(theta, ellipsoid.inner.clone()).map_err(py_err)?;
    let support = ellipsoid.inner.support(max_degree);
    let obs = simulate_white_noise(&truth, &operator.inner, &support, n, seed).map_err(py_err)?;
    Ok(obs.iter().map(|(j, z)| (j.to_string(), z)).collect())
}

/// Dense ellipsoid-constrained minimizer: `(estimate, risk, lambda)`.
#[pyfunction]
#[pyo3(signature = (ellipsoid, operator, stats, n, delta, epsilon = 1e-10))]
fn dense_estimate(
    ellipsoid: &PyEllipsoid,
    operator: &PyOperator,
    stats: BTreeMap<String, f64>,
    n: f64,
    delta: f64,
    epsilon: f64,
) -> PyResult<(BTreeMap<String, f64>, f64, f64)> {
    let obs = white_noise(ellipsoid, stats, n)?;
    let m = dense_truncation(&ellipsoid.inner, delta).map_err(py_err)?;
    let est = dense_minimize(&ellipsoid.inner, &obs, &operator.inner, m, epsilon).map_err(py_err)?;
    let lambda = est.lagrange_multiplier().unwrap_or(0.0);
    Ok((from_coefficients(&est.estimate), est.risk_value, lambda))
}

/// Lattice delta-net minimizer: `(estimate, risk)`.
#[pyfunction]
fn delta_net_estimate(
    ellipsoid: &PyEllipsoid,
    operator: &PyOperator,
    stats: BTreeMap<String, f64>,
    n: f64,
    delta: f64,
) -> PyResult<(BTreeMap<String, f64>, f64)> {
    let obs = white_noise(ellipsoid, stats, n)?;
    let net = LatticeNet::new(&ellipsoid.inner, delta).map_err(py_err)?;
    let est = delta_net_minimize(&net, &obs, &operator.inner).map_err(py_err)?;
    Ok((from_coefficients(&est.estimate), est.risk_value))
}

/// Monte Carlo MISE under white noise: `(mean, stderr)`.
#[pyfunction]
#[pyo3(signature = (theta, ellipsoid, operator, n, delta, reps, seed = 0, estimator = "dense"))]
#[allow(clippy::too_many_arguments)]
fn mise(
    theta: BTreeMap<String, f64>,
    ellipsoid: &PyEllipsoid,
    operator: &PyOperator,
    n: u64,
    delta: f64,
    reps: usize,
    seed: u64,
    estimator: &str,
) -> PyResult<(f64, f64)> {
    let theta = to_coefficients(ellipsoid.inner.domain().family(), theta)?;
    let truth = TruthSpec::new(theta, ellipsoid.inner.clone()).map_err(py_err)?;
    let config = match estimator {
        "dense" => EstimatorConfig::Dense {
            delta,
            epsilon: 1e-10,
        },
        "delta-net" => EstimatorConfig::DeltaNet { delta },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown estimator `{other}`; expected `dense` or `delta-net`"
            )))
        }
    };
    let m = risk::mise_monte_carlo(
        &truth,
        &operator.inner,
        ObservationModel::WhiteNoise,
        &config,
        n,
        reps,
        seed,
    )
    .map_err(py_err)?;
    Ok((m.mean, m.stderr))
}

/// Lattice net statistics `(log cardinality, rho)` at `delta`.
#[pyfunction]
fn net_stats(ellipsoid: &PyEllipsoid, operator: &PyOperator, delta: f64) -> PyResult<(f64, f64)> {
    risk::lattice_net_stats(&ellipsoid.inner, &operator.inner, delta).map_err(py_err)
}

/// White-noise oracle bound for the delta-net estimator.
#[pyfunction]
#[pyo3(signature = (delta, log_cardinality, rho, n, c_tau = TheoremOneConstants::DEFAULT_C_TAU, xi = TheoremOneConstants::DEFAULT_XI))]
fn oracle_bound(
    delta: f64,
    log_cardinality: f64,
    rho: f64,
    n: f64,
    c_tau: f64,
    xi: f64,
) -> PyResult<f64> {
    let consts = TheoremOneConstants::new(risk::BoundMode::WhiteNoise, c_tau, xi).map_err(py_err)?;
    risk::theorem1_bound(&consts, delta, log_cardinality, rho, n).map_err(py_err)
}

/// Additive-model bound from per-component deltas, rhos and log net sizes.
#[pyfunction]
fn additive_bound(c: f64, deltas: Vec<f64>, rhos: Vec<f64>, lambdas: Vec<f64>, n: f64) -> PyResult<f64> {
    risk::theorem4_bound(c, &deltas, &rhos, &lambdas, n).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (s, q, d = 1.0))]
fn convolution_rate(s: f64, q: f64, d: f64) -> f64 {
    risk::convolution_rate(s, q, d)
}

#[pyfunction]
#[pyo3(signature = (s, d = 2.0))]
fn radon_rate(s: f64, d: f64) -> f64 {
    risk::radon_rate(s, d)
}

#[pyfunction]
#[pyo3(signature = (n, s, q, d = 1.0))]
fn matched_delta(n: f64, s: f64, q: f64, d: f64) -> f64 {
    risk::matched_delta(n, s, q, d)
}

/// Weighted log-log fit of MISE against n: `(slope, slope_stderr, within)`.
#[pyfunction]
fn fit_rate(
    ns: Vec<u64>,
    mises: Vec<f64>,
    stderrs: Vec<f64>,
    reps: usize,
    target: f64,
    tolerance: f64,
) -> PyResult<(f64, f64, bool)> {
    let exp = risk::RateExperiment::new(ns, mises, stderrs, reps, target).map_err(py_err)?;
    let fit = risk::rate_regression(&exp).map_err(py_err)?;
    Ok((fit.slope, fit.slope_stderr, fit.within(tolerance)))
}

/// Run a CLI subcommand on a config file; returns the summary as JSON text.
#[pyfunction]
#[pyo3(signature = (command, config, out = None, seed = None))]
fn run(py: Python<'_>, command: &str, config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<String> {
    let command = match command {
        "simulate" => Command::Simulate,
        "estimate" => Command::Estimate,
        "rates" => Command::Rates,
        "net-stats" => Command::NetStats,
        "bound-check" => Command::BoundCheck,
        other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
    };
    let mut cfg = ExperimentConfig::load(&config).map_err(py_err)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    let value = py.detach(|| cli::run(command, &cfg)).map_err(py_err)?;
    Ok(value.to_string())
}

#[pymodule]
fn inverse_erm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEllipsoid>()?;
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(dense_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(delta_net_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(mise, m)?)?;
    m.add_function(wrap_pyfunction!(net_stats, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_bound, m)?)?;
    m.add_function(wrap_pyfunction!(additive_bound, m)?)?;
    m.add_function(wrap_pyfunction!(convolution_rate, m)?)?;
    m.add_function(wrap_pyfunction!(radon_rate, m)?)?;
    m.add_function(wrap_pyfunction!(matched_delta, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
