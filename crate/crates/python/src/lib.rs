//! Python bindings for the `mimo_alloc` library.
//!
//! Exposes the system configuration, fading snapshots, rate coefficients,
//! the allocation solvers, the Monte Carlo estimator and the experiment
//! runner. Library errors surface as `ValueError`, or `OSError` for
//! filesystem failures.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mimo_alloc::geometry::{center_cell, generate_snapshot, ConfigFile};
use mimo_alloc::harness::{self, ExperimentSpec, Figure};
use mimo_alloc::montecarlo::empirical_ergodic_rate;
use mimo_alloc::optimizer::{self, DEFAULT_TOLERANCE};
use mimo_alloc::spectral::{self, EnergyBudget as CoreBudget, PowerAllocation};

fn py_err(e: mimo_alloc::Error) -> PyErr {
    match e {
        mimo_alloc::Error::Io { .. } | mimo_alloc::Error::Csv { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Cellular layout and fading model parameters.
#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
pub struct PySystemConfig {
    inner: mimo_alloc::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (
        cells = 7,
        antennas = 100,
        terminals = 10,
        coherence_length = 200,
        cell_radius_m = 1000.0,
        exclusion_radius_m = 200.0,
        shadow_std_db = 8.0,
        pathloss_exponent = 3.8,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        cells: usize,
        antennas: usize,
        terminals: usize,
        coherence_length: usize,
        cell_radius_m: f64,
        exclusion_radius_m: f64,
        shadow_std_db: f64,
        pathloss_exponent: f64,
    ) -> PyResult<Self> {
        let inner = mimo_alloc::SystemConfig {
            cells,
            antennas,
            terminals,
            coherence_length,
            cell_radius_m,
            exclusion_radius_m,
            shadow_std_db,
            pathloss_exponent,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads a TOML config; returns `(config, seed)`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Self, u64)> {
        let file = ConfigFile::load(&path).map_err(py_err)?;
        Ok((Self { inner: file.system() }, file.seed))
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.cells
    }
    #[getter]
    fn antennas(&self) -> usize {
        self.inner.antennas
    }
    #[getter]
    fn terminals(&self) -> usize {
        self.inner.terminals
    }
    #[getter]
    fn coherence_length(&self) -> usize {
        self.inner.coherence_length
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Large-scale fading coefficients `beta[l][i][k]` of one snapshot.
#[pyclass(name = "FadingSnapshot", frozen)]
pub struct PyFadingSnapshot {
    inner: mimo_alloc::FadingSnapshot,
}

#[pymethods]
impl PyFadingSnapshot {
    #[staticmethod]
    fn generate(config: &PySystemConfig, seed: u64, index: u64) -> PyResult<Self> {
        let inner = generate_snapshot(&config.inner, seed, index).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Builds a snapshot from a flat list in `(bs, cell, terminal)` order.
    #[staticmethod]
    fn from_list(cells: usize, terminals: usize, beta: Vec<f64>) -> PyResult<Self> {
        let inner = mimo_alloc::FadingSnapshot::new(cells, terminals, beta).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.cells()
    }
    #[getter]
    fn terminals(&self) -> usize {
        self.inner.terminals()
    }

    fn beta(&self, bs: usize, cell: usize, terminal: usize) -> PyResult<f64> {
        let (l, k) = (self.inner.cells(), self.inner.terminals());
        if bs >= l || cell >= l || terminal >= k {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.beta(bs, cell, terminal))
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    /// Per-terminal `(a, b, c, d)` for the center cell with `antennas` antennas.
    fn rate_coefficients(&self, antennas: usize) -> PyResult<PyRateCoefficients> {
        let inner = spectral::rate_coefficients(&self.inner, antennas, center_cell()).map_err(py_err)?;
        Ok(PyRateCoefficients { inner })
    }
}

#[pyclass(name = "RateCoefficients", frozen)]
pub struct PyRateCoefficients {
    inner: mimo_alloc::RateCoefficients,
}

#[pymethods]
impl PyRateCoefficients {
    /// Builds coefficients from `(a, b, c, d)` tuples.
    #[new]
    fn new(terms: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(a, b, c, d)| mimo_alloc::TerminalCoefficients { a, b, c, d })
            .collect();
        let inner = mimo_alloc::RateCoefficients::new(terms).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_list(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.iter().map(|t| (t.a, t.b, t.c, t.d)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.terminals()
    }
}

#[pyclass(name = "EnergyBudget", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyEnergyBudget {
    inner: CoreBudget,
}

#[pymethods]
impl PyEnergyBudget {
    #[new]
    fn new(total: f64, coherence_length: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreBudget::new(total, coherence_length).map_err(py_err)?,
        })
    }

    /// Budget with average SNR `P / T` given in dB.
    #[staticmethod]
    fn from_snr_db(snr_db: f64, coherence_length: usize) -> PyResult<Self> {
        let snr = harness::db_to_linear(snr_db);
        Ok(Self {
            inner: CoreBudget::from_snr(snr, coherence_length).map_err(py_err)?,
        })
    }

    #[getter]
    fn total(&self) -> f64 {
        self.inner.total
    }
    #[getter]
    fn coherence_length(&self) -> usize {
        self.inner.coherence_length
    }
    #[getter]
    fn snr(&self) -> f64 {
        self.inner.snr()
    }
}

#[pyclass(name = "AllocationSolution", frozen, get_all)]
pub struct PyAllocationSolution {
    tau_star: usize,
    pilot_power: f64,
    data_power: f64,
    sum_rate: f64,
    bit_energy: Option<f64>,
    iterations: usize,
    bracket_width: f64,
}

impl From<mimo_alloc::AllocationSolution> for PyAllocationSolution {
    fn from(s: mimo_alloc::AllocationSolution) -> Self {
        Self {
            tau_star: s.tau_star,
            pilot_power: s.pilot_power,
            data_power: s.data_power,
            sum_rate: s.sum_rate,
            bit_energy: s.bit_energy,
            iterations: s.iterations,
            bracket_width: s.bracket_width,
        }
    }
}

#[pymethods]
impl PyAllocationSolution {
    fn __repr__(&self) -> String {
        format!(
            "AllocationSolution(tau_star={}, pilot_power={}, data_power={}, sum_rate={})",
            self.tau_star, self.pilot_power, self.data_power, self.sum_rate
        )
    }
}

/// Optimal pilot and data power at `tau = K`.
#[pyfunction]
#[pyo3(signature = (coeffs, budget, tol = DEFAULT_TOLERANCE))]
fn solve_p2(coeffs: &PyRateCoefficients, budget: &PyEnergyBudget, tol: f64) -> PyResult<PyAllocationSolution> {
    Ok(optimizer::solve_p2(&coeffs.inner, &budget.inner, tol).map_err(py_err)?.into())
}

/// Joint optimum found by scanning every training length.
#[pyfunction]
#[pyo3(signature = (coeffs, budget, tol = DEFAULT_TOLERANCE))]
fn solve_p1_bruteforce(
    coeffs: &PyRateCoefficients,
    budget: &PyEnergyBudget,
    tol: f64,
) -> PyResult<PyAllocationSolution> {
    Ok(optimizer::solve_p1_bruteforce(&coeffs.inner, &budget.inner, tol)
        .map_err(py_err)?
        .into())
}

/// `tau = K`, `p_p = p_u = P / T`.
#[pyfunction]
fn equal_power_baseline(coeffs: &PyRateCoefficients, budget: &PyEnergyBudget) -> PyResult<PyAllocationSolution> {
    Ok(optimizer::equal_power_baseline(&coeffs.inner, &budget.inner)
        .map_err(py_err)?
        .into())
}

/// Sum spectral efficiency in bits/s/Hz for an explicit allocation.
#[pyfunction]
fn sum_spectral_efficiency(
    coeffs: &PyRateCoefficients,
    tau: usize,
    pilot_power: f64,
    data_power: f64,
    coherence_length: usize,
) -> f64 {
    let alloc = PowerAllocation::new(tau, pilot_power, data_power);
    spectral::sum_spectral_efficiency(&coeffs.inner, &alloc, coherence_length)
}

/// Per-terminal closed-form rates (prelog not applied).
#[pyfunction]
fn achievable_rates(coeffs: &PyRateCoefficients, tau: usize, pilot_power: f64, data_power: f64) -> Vec<f64> {
    let alloc = PowerAllocation::new(tau, pilot_power, data_power);
    coeffs.inner.iter().map(|c| spectral::achievable_rate(c, &alloc)).collect()
}

/// Monte Carlo ergodic rate per center-cell terminal as `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (snapshot, antennas, tau, pilot_power, data_power, trials, seed))]
#[allow(clippy::too_many_arguments)]
fn empirical_rates(
    py: Python<'_>,
    snapshot: &PyFadingSnapshot,
    antennas: usize,
    tau: usize,
    pilot_power: f64,
    data_power: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let alloc = PowerAllocation::new(tau, pilot_power, data_power);
    let snap = &snapshot.inner;
    let est = py
        .detach(|| empirical_ergodic_rate(snap, antennas, &alloc, trials, seed, center_cell()))
        .map_err(py_err)?;
    Ok(est.into_iter().map(|e| (e.mean, e.std_error)).collect())
}

/// Runs `fig1`, `fig2`, `fig3` or `validate` and returns the written CSV
/// paths. Unset options fall back to the experiment defaults.
#[pyfunction]
#[pyo3(signature = (figure, config, seed, out_dir, snapshots = None, antennas = None, snr_db = None, trials = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    figure: &str,
    config: &PySystemConfig,
    seed: u64,
    out_dir: PathBuf,
    snapshots: Option<usize>,
    antennas: Option<Vec<usize>>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
) -> PyResult<Vec<PathBuf>> {
    let figure: Figure = figure.parse().map_err(py_err)?;
    let mut spec = ExperimentSpec::new(figure, &config.inner, seed, out_dir);
    if let Some(s) = snapshots {
        spec.snapshots = s;
    }
    if let Some(a) = antennas {
        spec.antenna_counts = a;
    }
    if let Some(g) = snr_db {
        spec.snr_grid_db = g;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    let cfg = &config.inner;
    let report = py.detach(|| harness::run(&spec, cfg)).map_err(py_err)?;
    Ok(report.files().to_vec())
}

#[pymodule]
#[pyo3(name = "mimo_alloc")]
pub fn mimo_alloc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyFadingSnapshot>()?;
    m.add_class::<PyRateCoefficients>()?;
    m.add_class::<PyEnergyBudget>()?;
    m.add_class::<PyAllocationSolution>()?;
    m.add_function(wrap_pyfunction!(solve_p2, m)?)?;
    m.add_function(wrap_pyfunction!(solve_p1_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(equal_power_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(sum_spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(achievable_rates, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_rates, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
