//! Python bindings: Gaussian-state toolkit, detector models, key rates,
//! tolerable-noise search and the Monte-Carlo equivalence check.

use std::collections::BTreeMap;

use cvqkd_core::analysis::{self, BisectionReport, RootMethod};
use cvqkd_core::gaussian::{self, Quadrature};
use cvqkd_core::mcsim::{self, EquivalenceReport, PmConfig};
use cvqkd_core::{detector, protocol, Error};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(cvqkd, CvqkdError, PyValueError, "Invalid argument or failed computation.");

fn py_err(e: Error) -> PyErr {
    CvqkdError::new_err(e.to_string())
}

fn quadrature(name: &str) -> PyResult<Quadrature> {
    match name {
        "x" | "X" => Ok(Quadrature::X),
        "p" | "P" => Ok(Quadrature::P),
        other => Err(CvqkdError::new_err(format!("quadrature must be 'x' or 'p', got {other:?}"))),
    }
}

#[pyclass(name = "CovarianceMatrix", module = "cvqkd", frozen)]
struct PyCovariance(gaussian::CovarianceMatrix);

#[pymethods]
impl PyCovariance {
    /// Builds a covariance matrix from a square list of rows (x1, p1, x2, p2, ...).
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(CvqkdError::new_err("matrix rows must all have the same length as the row count"));
        }
        let m = nalgebra_from_rows(&rows);
        gaussian::CovarianceMatrix::new(m).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn vacuum(modes: usize) -> Self {
        Self(gaussian::CovarianceMatrix::vacuum(modes))
    }

    #[staticmethod]
    fn thermal(variance: f64) -> PyResult<Self> {
        gaussian::CovarianceMatrix::thermal(variance).map(Self).map_err(py_err)
    }

    #[getter]
    fn modes(&self) -> usize {
        self.0.modes()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        let d = self.0.dim();
        (0..d).map(|i| (0..d).map(|j| self.0.get(i, j)).collect()).collect()
    }

    fn variance(&self, mode: usize, quad: &str) -> PyResult<f64> {
        if mode >= self.0.modes() {
            return Err(CvqkdError::new_err(format!("mode {mode} out of range")));
        }
        Ok(self.0.variance(mode, quadrature(quad)?))
    }

    fn select_modes(&self, modes: Vec<usize>) -> PyResult<Self> {
        self.0.select_modes(&modes).map(Self).map_err(py_err)
    }

    fn symplectic_eigenvalues(&self) -> PyResult<Vec<f64>> {
        self.0.symplectic_eigenvalues().map_err(py_err)
    }

    fn is_physical(&self) -> bool {
        self.0.is_physical()
    }

    /// Von Neumann entropy in bits.
    fn entropy(&self) -> PyResult<f64> {
        self.0.entropy().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("CovarianceMatrix(modes={}, rows={:?})", self.0.modes(), self.to_list())
    }
}

fn nalgebra_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[pyclass(name = "SymplecticTransform", module = "cvqkd", frozen)]
struct PyTransform(gaussian::SymplecticTransform);

#[pymethods]
impl PyTransform {
    #[staticmethod]
    fn identity(modes: usize) -> Self {
        Self(gaussian::SymplecticTransform::identity(modes))
    }

    #[getter]
    fn modes(&self) -> usize {
        self.0.modes()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        let m = self.0.matrix();
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }

    /// The transform that runs `first`, then `self`.
    fn after(&self, first: &PyTransform) -> PyResult<Self> {
        self.0.after(&first.0).map(Self).map_err(py_err)
    }

    fn apply(&self, gamma: &PyCovariance) -> PyResult<PyCovariance> {
        gaussian::apply(&self.0, &gamma.0).map(PyCovariance).map_err(py_err)
    }
}

#[pyfunction]
fn epr_state(variance: f64) -> PyResult<PyCovariance> {
    gaussian::epr_state(variance).map(PyCovariance).map_err(py_err)
}

#[pyfunction]
fn beamsplitter(transmittance: f64, n_modes: usize, a: usize, b: usize) -> PyResult<PyTransform> {
    gaussian::beamsplitter(transmittance, n_modes, a, b).map(PyTransform).map_err(py_err)
}

#[pyfunction]
fn psa(gain: f64, n_modes: usize, mode: usize) -> PyResult<PyTransform> {
    gaussian::psa(gain, n_modes, mode).map(PyTransform).map_err(py_err)
}

#[pyfunction]
fn attach_vacuum(gamma: &PyCovariance) -> PyCovariance {
    PyCovariance(gaussian::attach_vacuum(&gamma.0))
}

#[pyfunction]
#[pyo3(signature = (gamma, mode, quad = "x"))]
fn homodyne_condition(gamma: &PyCovariance, mode: usize, quad: &str) -> PyResult<PyCovariance> {
    gaussian::homodyne_condition(&gamma.0, mode, quadrature(quad)?)
        .map(PyCovariance)
        .map_err(py_err)
}

#[pyfunction]
fn g_function(x: f64) -> PyResult<f64> {
    gaussian::g_function(x).map_err(py_err)
}

#[pyclass(name = "ModifiedDetector", module = "cvqkd", frozen)]
struct PyModifiedDetector(cvqkd_core::ModifiedDetector);

#[pymethods]
impl PyModifiedDetector {
    #[new]
    fn new(eta_d: f64, eta_e: f64) -> PyResult<Self> {
        cvqkd_core::ModifiedDetector::new(eta_d, eta_e).map(Self).map_err(py_err)
    }

    /// Detector whose electronic-noise transmittance comes from a raw calibration.
    #[staticmethod]
    fn from_calibration(eta_d: f64, amplification: f64, lo_amplitude: f64, electronic_noise_variance: f64) -> PyResult<Self> {
        let cal = cvqkd_core::RawCalibration::new(amplification, lo_amplitude, electronic_noise_variance).map_err(py_err)?;
        cvqkd_core::ModifiedDetector::from_calibration(eta_d, &cal).map(Self).map_err(py_err)
    }

    #[getter]
    fn eta_d(&self) -> f64 {
        self.0.eta_d
    }

    #[getter]
    fn eta_e(&self) -> f64 {
        self.0.eta_e
    }

    fn to_conventional(&self) -> PyConventionalDetector {
        PyConventionalDetector(self.0.to_conventional())
    }

    fn output_variance(&self, v_m: f64) -> f64 {
        detector::modified_output_variance(&self.0, v_m)
    }

    fn __repr__(&self) -> String {
        format!("ModifiedDetector(eta_d={}, eta_e={})", self.0.eta_d, self.0.eta_e)
    }
}

#[pyclass(name = "ConventionalDetector", module = "cvqkd", frozen)]
struct PyConventionalDetector(cvqkd_core::ConventionalDetector);

#[pymethods]
impl PyConventionalDetector {
    #[new]
    fn new(eta_d: f64, v_el: f64) -> PyResult<Self> {
        cvqkd_core::ConventionalDetector::new(eta_d, v_el).map(Self).map_err(py_err)
    }

    #[getter]
    fn eta_d(&self) -> f64 {
        self.0.eta_d
    }

    #[getter]
    fn v_el(&self) -> f64 {
        self.0.v_el
    }

    fn to_modified(&self) -> PyModifiedDetector {
        PyModifiedDetector(self.0.to_modified())
    }

    fn output_variance(&self, v_m: f64) -> f64 {
        detector::conventional_output_variance(&self.0, v_m)
    }

    fn __repr__(&self) -> String {
        format!("ConventionalDetector(eta_d={}, v_el={})", self.0.eta_d, self.0.v_el)
    }
}

#[pyfunction]
fn equivalence_residual(eta_d: f64, v_el: f64, v_m: f64) -> PyResult<f64> {
    detector::equivalence_residual(eta_d, v_el, v_m).map_err(py_err)
}

#[pyclass(name = "ChannelParams", module = "cvqkd", frozen)]
struct PyChannel(cvqkd_core::ChannelParams);

#[pymethods]
impl PyChannel {
    #[new]
    fn new(transmittance: f64, excess_noise: f64) -> PyResult<Self> {
        cvqkd_core::ChannelParams::new(transmittance, excess_noise).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (length_km, excess_noise, attenuation_db_per_km = protocol::FIBER_LOSS_DB_PER_KM))]
    fn from_length(length_km: f64, excess_noise: f64, attenuation_db_per_km: f64) -> PyResult<Self> {
        cvqkd_core::ChannelParams::from_length(length_km, attenuation_db_per_km, excess_noise)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn transmittance(&self) -> f64 {
        self.0.transmittance()
    }

    #[getter]
    fn excess_noise(&self) -> f64 {
        self.0.excess_noise()
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelParams(transmittance={}, excess_noise={})",
            self.0.transmittance(),
            self.0.excess_noise()
        )
    }
}

#[pyclass(name = "ProtocolParams", module = "cvqkd", frozen)]
struct PyProtocol(cvqkd_core::ProtocolParams);

#[pymethods]
impl PyProtocol {
    #[new]
    #[pyo3(signature = (epr_variance, beta, gain = 1.0))]
    fn new(epr_variance: f64, beta: f64, gain: f64) -> PyResult<Self> {
        cvqkd_core::ProtocolParams::new(epr_variance, beta, gain).map(Self).map_err(py_err)
    }

    #[getter]
    fn epr_variance(&self) -> f64 {
        self.0.epr_variance
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn gain(&self) -> f64 {
        self.0.gain
    }

    #[getter]
    fn modulation_variance(&self) -> f64 {
        self.0.modulation_variance()
    }

    fn with_gain(&self, gain: f64) -> PyResult<Self> {
        self.0.with_gain(gain).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProtocolParams(epr_variance={}, beta={}, gain={})",
            self.0.epr_variance, self.0.beta, self.0.gain
        )
    }
}

#[pyclass(name = "KeyRateBreakdown", module = "cvqkd", frozen)]
struct PyKeyRate(cvqkd_core::KeyRateBreakdown);

#[pymethods]
impl PyKeyRate {
    /// Signed rate in bits per pulse; negative means no key.
    #[getter]
    fn key_rate(&self) -> f64 {
        self.0.key_rate
    }

    #[getter]
    fn i_ab(&self) -> f64 {
        self.0.i_ab
    }

    #[getter]
    fn chi_be(&self) -> f64 {
        self.0.chi_be
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.0.lambdas.to_vec()
    }

    #[getter]
    fn achievable_rate(&self) -> f64 {
        self.0.achievable_rate()
    }

    /// Final (A, C, B4') state.
    #[getter]
    fn state(&self) -> PyCovariance {
        PyCovariance(self.0.gamma_acb4.clone())
    }

    fn __repr__(&self) -> String {
        format!(
            "KeyRateBreakdown(key_rate={}, i_ab={}, chi_be={})",
            self.0.key_rate, self.0.i_ab, self.0.chi_be
        )
    }
}

#[pyfunction]
fn secret_key_rate(channel: &PyChannel, detector: &PyModifiedDetector, protocol: &PyProtocol) -> PyResult<PyKeyRate> {
    protocol::secret_key_rate(&channel.0, &detector.0, &protocol.0)
        .map(PyKeyRate)
        .map_err(py_err)
}

/// (A, C, B4') state of the detection chain.
#[pyfunction]
fn build_state(channel: &PyChannel, detector: &PyModifiedDetector, protocol: &PyProtocol) -> PyResult<PyCovariance> {
    protocol::build_chain(&channel.0, &detector.0, &protocol.0)
        .map(|st| PyCovariance(st.acb4))
        .map_err(py_err)
}

#[pyclass(name = "BisectionReport", module = "cvqkd", frozen)]
struct PyBisection(BisectionReport);

#[pymethods]
impl PyBisection {
    #[getter]
    fn root(&self) -> f64 {
        self.0.root
    }

    #[getter]
    fn bracket(&self) -> (f64, f64) {
        self.0.bracket
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn method(&self) -> &'static str {
        match self.0.method {
            RootMethod::Bisection => "bisection",
            RootMethod::GridScan => "grid_scan",
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "BisectionReport(root={}, iterations={}, method={:?})",
            self.0.root,
            self.0.iterations,
            self.method()
        )
    }
}

fn fiber(attenuation_db_per_km: f64, excess_noise: f64) -> PyResult<cvqkd_core::FiberChannel> {
    cvqkd_core::FiberChannel::new(attenuation_db_per_km, excess_noise).map_err(py_err)
}

/// Largest excess noise (SNU) that still gives a positive key rate at `distance_km`.
#[pyfunction]
#[pyo3(signature = (distance_km, detector, protocol, attenuation_db_per_km = protocol::FIBER_LOSS_DB_PER_KM, tol = analysis::DEFAULT_RATE_TOL))]
fn max_tolerable_excess_noise(
    distance_km: f64,
    detector: &PyModifiedDetector,
    protocol: &PyProtocol,
    attenuation_db_per_km: f64,
    tol: f64,
) -> PyResult<PyBisection> {
    analysis::max_tolerable_excess_noise(fiber(attenuation_db_per_km, 0.0)?, &detector.0, &protocol.0, distance_km, tol)
        .map(PyBisection)
        .map_err(py_err)
}

/// Key rate against distance for each gain series. Failed points are `None`.
#[pyfunction]
#[pyo3(signature = (distances_km, detector, protocol, gains, include_ideal = true, excess_noise = 0.01, attenuation_db_per_km = protocol::FIBER_LOSS_DB_PER_KM))]
fn sweep_distance(
    distances_km: Vec<f64>,
    detector: &PyModifiedDetector,
    protocol: &PyProtocol,
    gains: Vec<f64>,
    include_ideal: bool,
    excess_noise: f64,
    attenuation_db_per_km: f64,
) -> PyResult<BTreeMap<String, Vec<Option<f64>>>> {
    let series = analysis::gain_series(
        fiber(attenuation_db_per_km, excess_noise)?,
        detector.0,
        protocol.0,
        &gains,
        include_ideal,
    )
    .map_err(py_err)?;
    let res = analysis::sweep_distance(&series, &distances_km).map_err(py_err)?;
    Ok(res
        .series
        .iter()
        .map(|s| (s.label().to_string(), s.key_rates()))
        .collect())
}

#[pyclass(name = "EquivalenceReport", module = "cvqkd", frozen)]
struct PyEquivalence(EquivalenceReport);

#[pymethods]
impl PyEquivalence {
    #[getter]
    fn n_samples(&self) -> usize {
        self.0.n_samples
    }

    #[getter]
    fn sample_variances(&self) -> (f64, f64) {
        (self.0.sample_variance_x, self.0.sample_variance_p)
    }

    #[getter]
    fn predicted_variances(&self) -> (f64, f64) {
        (self.0.predicted_x, self.0.predicted_p)
    }

    #[getter]
    fn z_scores(&self) -> (f64, f64) {
        self.0.z_scores
    }

    #[getter]
    fn z_covariance(&self) -> f64 {
        self.0.z_covariance
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.pass
    }

    fn __repr__(&self) -> String {
        format!(
            "EquivalenceReport(n_samples={}, z_scores={:?}, passed={})",
            self.0.n_samples, self.0.z_scores, self.0.pass
        )
    }
}

/// Samples the prepare-and-measure detector and compares the normalized
/// variances with the entanglement-based prediction.
#[pyfunction]
#[pyo3(signature = (amplification, lo_amplitude, electronic_noise_variance, eta_d, gain, v_b1, n_samples = 1_000_000, seed = 1, z_threshold = mcsim::DEFAULT_Z_THRESHOLD))]
#[allow(clippy::too_many_arguments)]
fn verify_equivalence(
    py: Python<'_>,
    amplification: f64,
    lo_amplitude: f64,
    electronic_noise_variance: f64,
    eta_d: f64,
    gain: f64,
    v_b1: f64,
    n_samples: usize,
    seed: u64,
    z_threshold: f64,
) -> PyResult<PyEquivalence> {
    let cal = cvqkd_core::RawCalibration::new(amplification, lo_amplitude, electronic_noise_variance).map_err(py_err)?;
    let cfg = PmConfig::new(cal, eta_d, gain, v_b1, n_samples, seed).map_err(py_err)?;
    py.detach(|| mcsim::verify_equivalence(&cfg, z_threshold))
        .map(PyEquivalence)
        .map_err(py_err)
}

#[pymodule]
fn cvqkd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CvqkdError", m.py().get_type::<CvqkdError>())?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyTransform>()?;
    m.add_class::<PyModifiedDetector>()?;
    m.add_class::<PyConventionalDetector>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyKeyRate>()?;
    m.add_class::<PyBisection>()?;
    m.add_class::<PyEquivalence>()?;
    for f in [
        wrap_pyfunction!(epr_state, m)?,
        wrap_pyfunction!(beamsplitter, m)?,
        wrap_pyfunction!(psa, m)?,
        wrap_pyfunction!(attach_vacuum, m)?,
        wrap_pyfunction!(homodyne_condition, m)?,
        wrap_pyfunction!(g_function, m)?,
        wrap_pyfunction!(equivalence_residual, m)?,
        wrap_pyfunction!(secret_key_rate, m)?,
        wrap_pyfunction!(build_state, m)?,
        wrap_pyfunction!(max_tolerable_excess_noise, m)?,
        wrap_pyfunction!(sweep_distance, m)?,
        wrap_pyfunction!(verify_equivalence, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
