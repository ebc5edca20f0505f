//! Python bindings. Complex samples cross the boundary as Python `complex`;
//! measurement matrices as lists of rows.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use phaseless::altproj::{self, AltProjOptions, IterReport, TemporalConstraint};
use phaseless::ambiguity::{self, AutocorrPoly};
use phaseless::forward::{self, WindowSpec};
use phaseless::gespar::GesparOptions;
use phaseless::gradient::{GdOptions, LossKind, LossSpec};
use phaseless::minphase::{self, CepstralConfig};
use phaseless::sdp::{self, AdmmOptions, SdpReport};
use phaseless::signal::{self as sig, Rng, TrivialGroup};
use phaseless::stft_direct;
use phaseless::{Error, C64};

create_exception!(phaseless, PhaselessError, PyException);
create_exception!(phaseless, ModelMismatchError, PhaselessError);
create_exception!(phaseless, NotConvergedError, PhaselessError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Config(_) | Error::Parse(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::ModelMismatch(_) => ModelMismatchError::new_err(e.to_string()),
        Error::NotConverged(_) => NotConvergedError::new_err(e.to_string()),
        _ => PhaselessError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for phaseless::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A 1D or 2D complex signal.
#[pyclass(module = "phaseless", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Signal(sig::Signal);

#[pymethods]
impl Signal {
    #[new]
    #[pyo3(signature = (values, shape=None))]
    fn new(values: Vec<C64>, shape: Option<(usize, usize)>) -> PyResult<Self> {
        match shape {
            Some((n1, n2)) => sig::Signal::new_2d(values, n1, n2),
            None => sig::Signal::new(values),
        }
        .py()
        .map(Signal)
    }

    /// `kind` is `complex`, `real` or `sparse:<s>`.
    #[staticmethod]
    #[pyo3(signature = (n, kind="complex", seed=0))]
    fn random(n: usize, kind: &str, seed: u64) -> PyResult<Self> {
        let kind = phaseless::bench::parse_signal_kind(kind).py()?;
        sig::random_signal(n, kind, &mut Rng::new(seed)).py().map(Signal)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        sig::Signal::from_json(text).py().map(Signal)
    }

    #[getter]
    fn values(&self) -> Vec<C64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn shape(&self) -> Option<(usize, usize)> {
        self.0.shape()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Signal(len={}, norm={:.6})", self.0.len(), self.0.norm())
    }
}

/// Phaseless measurements with their model descriptor.
#[pyclass(module = "phaseless", frozen, skip_from_py_object)]
#[derive(Clone)]
struct MeasurementSet(forward::MeasurementSet);

#[pymethods]
impl MeasurementSet {
    #[staticmethod]
    fn from_parts(descriptor_json: &str, matrix_csv: &str) -> PyResult<Self> {
        forward::MeasurementSet::from_parts(descriptor_json, matrix_csv).py().map(MeasurementSet)
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        (0..self.0.rows()).map(|m| self.0.row(m).to_vec()).collect()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.0.model().kind_name()
    }

    #[getter]
    fn signal_len(&self) -> usize {
        self.0.signal_len()
    }

    /// Additive Gaussian noise of absolute standard deviation `sigma`.
    fn with_noise(&self, sigma: f64, seed: u64) -> Self {
        MeasurementSet(self.0.with_noise(sigma, seed))
    }

    fn descriptor_json(&self) -> String {
        self.0.descriptor_json()
    }

    fn matrix_csv(&self) -> String {
        self.0.matrix_csv()
    }

    fn __repr__(&self) -> String {
        format!("MeasurementSet(model={}, shape={:?})", self.model(), self.shape())
    }
}

fn group(name: &str) -> PyResult<TrivialGroup> {
    Ok(match name {
        "none" => TrivialGroup::NONE,
        "rotation" => TrivialGroup::ROTATION,
        "rotation-reflection" => TrivialGroup::ROTATION_REFLECTION,
        "full" => TrivialGroup::FULL,
        _ => return Err(PyValueError::new_err(format!("unknown group `{name}`"))),
    })
}

fn window(w: usize, hop: usize, kind: &str, sigma: Option<f64>, periodic: bool) -> PyResult<WindowSpec> {
    match kind {
        "rectangular" => WindowSpec::rectangular(w, hop, periodic).py(),
        "gaussian" => WindowSpec::gaussian(sigma.unwrap_or(w as f64 / 3.0), w, hop, periodic).py(),
        _ => Err(PyValueError::new_err(format!("unknown window `{kind}`"))),
    }
}

/// Oversampled Fourier magnitudes; defaults to `n_tilde = K = 2N - 1`.
#[pyfunction]
#[pyo3(signature = (x, n_tilde=None, k=None))]
fn measure_classical(x: &Signal, n_tilde: Option<usize>, k: Option<usize>) -> PyResult<MeasurementSet> {
    let nt = n_tilde.unwrap_or(2 * x.0.len() - 1);
    forward::measure_classical(&x.0, nt, k.unwrap_or(nt)).py().map(MeasurementSet)
}

/// `masks` is `fixed`, `block` (split at `param`) or `modulated` (shift `param`).
#[pyfunction]
#[pyo3(signature = (x, masks="fixed", param=1, n_tilde=None))]
fn measure_masked(x: &Signal, masks: &str, param: usize, n_tilde: Option<usize>) -> PyResult<MeasurementSet> {
    let n = x.0.len();
    let set = match masks {
        "fixed" => forward::masks_fixed(n),
        "block" => forward::masks_block(n, param),
        "modulated" => forward::masks_modulated(n, param),
        _ => return Err(PyValueError::new_err(format!("unknown mask family `{masks}`"))),
    }
    .py()?;
    let nt = n_tilde.unwrap_or(2 * n - 1);
    forward::measure_masked(&x.0, &set, nt, nt).py().map(MeasurementSet)
}

/// STFT magnitudes with `n_tilde = K` (default `N`).
#[pyfunction]
#[pyo3(signature = (x, w, hop=1, window_kind="rectangular", sigma=None, periodic=true, n_tilde=None))]
fn measure_stft(
    x: &Signal,
    w: usize,
    hop: usize,
    window_kind: &str,
    sigma: Option<f64>,
    periodic: bool,
    n_tilde: Option<usize>,
) -> PyResult<MeasurementSet> {
    let win = window(w, hop, window_kind, sigma, periodic)?;
    let nt = n_tilde.unwrap_or(x.0.len());
    forward::measure_stft(&x.0, &win, nt, nt).py().map(MeasurementSet)
}

#[pyfunction]
#[pyo3(signature = (x1, x2, hop=1))]
fn measure_frog(x1: &Signal, x2: &Signal, hop: usize) -> PyResult<MeasurementSet> {
    forward::measure_frog(&x1.0, &x2.0, hop).py().map(MeasurementSet)
}

/// Distance minimized over the trivial ambiguities in `group`.
#[pyfunction]
#[pyo3(signature = (x, z, group_name="rotation", relative=false))]
fn dist_up_to(x: &Signal, z: &Signal, group_name: &str, relative: bool) -> PyResult<f64> {
    let g = group(group_name)?;
    if relative {
        sig::rel_dist_up_to(&x.0, &z.0, g).py()
    } else {
        sig::dist_up_to(&x.0, &z.0, g).py()
    }
}

/// Every signal sharing the classical magnitudes of `x` (or of classical
/// measurements `y`), modulo rotation and conjugate reflection.
#[pyfunction]
#[pyo3(signature = (source, tol=None))]
fn enumerate_solutions(source: &Bound<'_, PyAny>, tol: Option<f64>) -> PyResult<Vec<Signal>> {
    let poly = if let Ok(x) = source.cast::<Signal>() {
        AutocorrPoly::from_signal(&x.get().0).py()?
    } else {
        let y = source.cast::<MeasurementSet>()?;
        ambiguity::autocorr_from_measurements(&y.get().0).py()?
    };
    Ok(ambiguity::enumerate_solutions(&poly, tol).py()?.solutions.into_iter().map(Signal).collect())
}

#[pyfunction]
fn is_minimum_phase(x: &Signal) -> bool {
    ambiguity::is_minimum_phase(&x.0)
}

#[pyfunction]
#[pyo3(signature = (x, delta=None))]
fn augment_min_phase(x: &Signal, delta: Option<C64>) -> PyResult<Signal> {
    minphase::augment_min_phase(&x.0, delta).py().map(Signal)
}

#[pyfunction]
fn kolmogorov_recover(y: &MeasurementSet) -> PyResult<Signal> {
    minphase::kolmogorov_recover(&y.0, &CepstralConfig::default()).py().map(Signal)
}

fn iter_result(py: Python<'_>, x: sig::Signal, r: IterReport) -> PyResult<(Signal, Py<PyDict>)> {
    let d = PyDict::new(py);
    d.set_item("errors", r.errors)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("final_error", r.final_error)?;
    d.set_item("halt", format!("{:?}", r.halt))?;
    Ok((Signal(x), d.unbind()))
}

/// Error reduction with a support constraint (default: the whole signal).
#[pyfunction]
#[pyo3(signature = (y, x0, support=None, nonnegative=false, max_iter=1000))]
fn error_reduction(
    py: Python<'_>,
    y: &MeasurementSet,
    x0: &Signal,
    support: Option<Vec<usize>>,
    nonnegative: bool,
    max_iter: usize,
) -> PyResult<(Signal, Py<PyDict>)> {
    let support = support.unwrap_or_else(|| (0..y.0.signal_len()).collect());
    let c = if nonnegative {
        TemporalConstraint::SupportNonnegative(support)
    } else {
        TemporalConstraint::Support(support)
    };
    let opts = AltProjOptions { max_iter, ..AltProjOptions::default() };
    let (x, r) = py.detach(|| altproj::error_reduction(&y.0, &c, &x0.0, &opts)).py()?;
    iter_result(py, x, r)
}

#[pyfunction]
#[pyo3(signature = (y, x0, beta=0.9, support=None, nonnegative=false, max_iter=1000))]
fn hio(
    py: Python<'_>,
    y: &MeasurementSet,
    x0: &Signal,
    beta: f64,
    support: Option<Vec<usize>>,
    nonnegative: bool,
    max_iter: usize,
) -> PyResult<(Signal, Py<PyDict>)> {
    let support = support.unwrap_or_else(|| (0..y.0.signal_len()).collect());
    let opts = AltProjOptions { max_iter, ..AltProjOptions::default() };
    let (x, r) = py.detach(|| altproj::hio(&y.0, &support, nonnegative, beta, &x0.0, &opts)).py()?;
    iter_result(py, x, r)
}

#[pyfunction]
#[pyo3(signature = (y, x0, max_iter=1000))]
fn griffin_lim(py: Python<'_>, y: &MeasurementSet, x0: &Signal, max_iter: usize) -> PyResult<(Signal, Py<PyDict>)> {
    let opts = AltProjOptions { max_iter, ..AltProjOptions::default() };
    let (x, r) = py.detach(|| altproj::griffin_lim(&y.0, &x0.0, &opts)).py()?;
    iter_result(py, x, r)
}

/// Gradient descent with backtracking on the intensity or amplitude loss.
#[pyfunction]
#[pyo3(signature = (y, x0, loss="intensity", max_iter=1000))]
fn gradient_descent(
    py: Python<'_>,
    y: &MeasurementSet,
    x0: &Signal,
    loss: &str,
    max_iter: usize,
) -> PyResult<(Signal, Py<PyDict>)> {
    let kind = match loss {
        "intensity" => LossKind::Intensity,
        "amplitude" => LossKind::Amplitude,
        _ => return Err(PyValueError::new_err(format!("unknown loss `{loss}`"))),
    };
    let spec = LossSpec::new(kind, &y.0).py()?;
    let opts = GdOptions { max_iter, ..GdOptions::default() };
    let (x, r) = py.detach(|| phaseless::gradient::gd_minimize(&spec, &x0.0, &opts)).py()?;
    iter_result(py, x, r)
}

fn sdp_result(py: Python<'_>, x: &sdp::HermitianMatrix, rep: SdpReport) -> PyResult<(Signal, Py<PyDict>)> {
    let (est, quality) = sdp::extract_rank_one(x).py()?;
    let d = PyDict::new(py);
    d.set_item("iterations", rep.iterations)?;
    d.set_item("converged", rep.converged)?;
    d.set_item("primal_residual", rep.primal_residual)?;
    d.set_item("dual_residual", rep.dual_residual)?;
    d.set_item("objective", rep.objective)?;
    d.set_item("eigenvalues", rep.eigenvalues)?;
    d.set_item("rank_one_quality", quality)?;
    Ok((Signal(est), d.unbind()))
}

/// Lifted SDP recovery. `kind` is `masked`, `stft` or `minphase`; `eps`
/// switches the masked program to interval constraints.
#[pyfunction]
#[pyo3(signature = (y, kind="masked", eps=None, tol=1e-7, max_iter=20000))]
fn sdp_recover(
    py: Python<'_>,
    y: &MeasurementSet,
    kind: &str,
    eps: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Signal, Py<PyDict>)> {
    let problem = match (kind, eps) {
        ("masked", None) => sdp::build_masked_trace(&y.0),
        ("masked", Some(e)) => sdp::build_masked_noisy(&y.0, e),
        ("stft", _) => sdp::build_stft_sdp(&y.0, None),
        ("minphase", _) => ambiguity::autocorr_from_measurements(&y.0).and_then(|a| {
            let lags: Vec<C64> = (0..a.signal_len() as isize).map(|k| a.lag(k)).collect();
            sdp::build_minphase(&lags)
        }),
        _ => return Err(PyValueError::new_err(format!("unknown SDP kind `{kind}`"))),
    }
    .py()?;
    let opts = AdmmOptions { tol, max_iter, record_trace: false, ..AdmmOptions::default() };
    let (x, rep) = py.detach(|| sdp::admm_run(&problem, &opts)).py()?;
    sdp_result(py, &x, rep)
}

#[pyfunction]
fn stft_ls_recover(y: &MeasurementSet) -> PyResult<Signal> {
    stft_direct::stft_ls_recover(&y.0).py().map(Signal)
}

#[pyfunction]
#[pyo3(signature = (y, lam=1e-6))]
fn stft_init(y: &MeasurementSet, lam: f64) -> PyResult<Signal> {
    stft_direct::stft_init_heuristic(&y.0, lam).py().map(Signal)
}

#[pyfunction]
#[pyo3(signature = (w, n, hop=1))]
fn is_admissible(w: usize, n: usize, hop: usize) -> PyResult<bool> {
    Ok(stft_direct::is_admissible(&WindowSpec::rectangular(w, hop, true).py()?, n))
}

/// Sparse recovery from classical magnitudes; returns the estimate and its objective.
#[pyfunction]
#[pyo3(signature = (y, sparsity, restarts=100, seed=0))]
fn gespar(py: Python<'_>, y: &MeasurementSet, sparsity: usize, restarts: usize, seed: u64) -> PyResult<(Signal, f64)> {
    let opts = GesparOptions { restarts, ..GesparOptions::default() };
    let (x, rep) = py.detach(|| phaseless::gespar::gespar(&y.0, sparsity, &opts, &Rng::new(seed))).py()?;
    Ok((Signal(x), rep.objective))
}

#[pymodule(name = "phaseless")]
fn phaseless_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Signal>()?;
    m.add_class::<MeasurementSet>()?;
    m.add("PhaselessError", m.py().get_type::<PhaselessError>())?;
    m.add("ModelMismatchError", m.py().get_type::<ModelMismatchError>())?;
    m.add("NotConvergedError", m.py().get_type::<NotConvergedError>())?;
    m.add_function(wrap_pyfunction!(measure_classical, m)?)?;
    m.add_function(wrap_pyfunction!(measure_masked, m)?)?;
    m.add_function(wrap_pyfunction!(measure_stft, m)?)?;
    m.add_function(wrap_pyfunction!(measure_frog, m)?)?;
    m.add_function(wrap_pyfunction!(dist_up_to, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_solutions, m)?)?;
    m.add_function(wrap_pyfunction!(is_minimum_phase, m)?)?;
    m.add_function(wrap_pyfunction!(augment_min_phase, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_recover, m)?)?;
    m.add_function(wrap_pyfunction!(error_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(hio, m)?)?;
    m.add_function(wrap_pyfunction!(griffin_lim, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_descent, m)?)?;
    m.add_function(wrap_pyfunction!(sdp_recover, m)?)?;
    m.add_function(wrap_pyfunction!(stft_ls_recover, m)?)?;
    m.add_function(wrap_pyfunction!(stft_init, m)?)?;
    m.add_function(wrap_pyfunction!(is_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(gespar, m)?)?;
    Ok(())
}
