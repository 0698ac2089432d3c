//! Python bindings. A tape is named by its integer seed; all heavy calls
//! release the interpreter lock.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyComplex, PyDict};

use spikeblock::fourier::{f_tail, Cutoff};
use spikeblock::master::{average_at, f_eval, HitProfile};
use spikeblock::regimes::{admissible_check, bounded_membership, Built, HitSetManifest, RegimeConfig};
use spikeblock::spike::{block_floor, block_moments, floor_bound, spike_eval};
use spikeblock::verify::{verify_built, Report, RunConfig};
use spikeblock::{BitTape, BlockParams, Error, Manifest, SpikeParams, TrialSpec};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Malformed(_) | Error::ZeroValuation | Error::NegativeExponent { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// The normalized spike of depth `d`.
#[pyclass(name = "Spike", frozen)]
struct PySpike(SpikeParams);

#[pymethods]
impl PySpike {
    #[new]
    fn new(d: u32) -> PyResult<Self> {
        SpikeParams::new(d).map(PySpike).map_err(err)
    }

    #[getter]
    fn d(&self) -> u32 {
        self.0.d
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn g(&self) -> f64 {
        self.0.g
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn second_moment(&self) -> f64 {
        self.0.second_moment()
    }

    /// Value at `2^v x` on the tape with this seed.
    fn eval(&self, seed: u64, v: u64) -> PyResult<f64> {
        spike_eval(&self.0, &BitTape::new(seed), v).map_err(err)
    }

    /// The `r`-th Fourier coefficient.
    fn coeff<'py>(&self, py: Python<'py>, r: i128) -> PyResult<Bound<'py, PyComplex>> {
        let c = spikeblock::spike_coeff(self.0.d, r).map_err(err)?;
        Ok(PyComplex::from_doubles(py, c.value.re, c.value.im))
    }

    /// `sum_{|r| > R} |phi^(r)|^2`.
    fn tail(&self, r: u128) -> PyResult<f64> {
        spikeblock::spike_tail(self.0.d, Cutoff::Exact(r)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Spike(d={})", self.0.d)
    }
}

/// One spike block.
#[pyclass(name = "Block", frozen)]
struct PyBlock(BlockParams);

#[pymethods]
impl PyBlock {
    /// Depth chosen from `(lambda, B, L)`; spacing defaults to `d + 2`.
    #[staticmethod]
    #[pyo3(signature = (lam, height, layers, spacing=None, base_shift=0, b_floor=1.0))]
    fn from_height(lam: f64, height: f64, layers: u64, spacing: Option<u64>, base_shift: u64, b_floor: f64) -> PyResult<Self> {
        BlockParams::from_height(lam, height, layers, spacing, base_shift, b_floor).map(PyBlock).map_err(err)
    }

    /// Explicit geometry, without the height constraints.
    #[staticmethod]
    #[pyo3(signature = (lam, layers, depth, spacing, base_shift=0))]
    fn geometric(lam: f64, layers: u64, depth: u32, spacing: u64, base_shift: u64) -> PyResult<Self> {
        BlockParams::geometric(lam, layers, depth, spacing, base_shift).map(PyBlock).map_err(err)
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn height(&self) -> f64 {
        self.0.height
    }

    #[getter]
    fn layers(&self) -> u64 {
        self.0.layers
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.0.depth
    }

    #[getter]
    fn spacing(&self) -> u64 {
        self.0.spacing
    }

    #[getter]
    fn base_shift(&self) -> u64 {
        self.0.base_shift
    }

    #[pyo3(signature = (seed, shift=0))]
    fn eval(&self, seed: u64, shift: i64) -> PyResult<f64> {
        spikeblock::block_eval(&self.0, &BitTape::new(seed), shift).map_err(err)
    }

    /// `E |F|^p` from the exact law.
    fn moment(&self, p: f64) -> PyResult<f64> {
        block_moments(&self.0, p).map_err(err)
    }

    /// Pointwise minimum of the block.
    fn floor(&self) -> f64 {
        block_floor(&self.0)
    }

    /// `-C3 lambda / B`.
    fn floor_bound(&self) -> f64 {
        floor_bound(&self.0)
    }

    /// `||F - S_N F||_2^2` at `N = n`, or at `N = 2^log2_n` when given.
    #[pyo3(signature = (n=None, log2_n=None))]
    fn tail(&self, n: Option<u128>, log2_n: Option<u64>) -> PyResult<f64> {
        spikeblock::block_tail(&self.0, cutoff(n, log2_n)?).map_err(err)
    }

    fn trial_sum(&self, trial: &PyTrial, seed: u64) -> PyResult<f64> {
        spikeblock::trial_sum(&self.0, &trial.0, &BitTape::new(seed)).map_err(err)
    }

    fn good_event(&self, trial: &PyTrial, seed: u64) -> PyResult<bool> {
        spikeblock::good_event(&self.0, &trial.0, &BitTape::new(seed)).map_err(err)
    }

    /// `(exact, floor)` for the good event of `trial`.
    fn good_probability(&self, trial: &PyTrial) -> PyResult<(f64, f64)> {
        let g = spikeblock::good_prob_exact(&self.0, &trial.0).map_err(err)?;
        Ok((g.exact, g.floor))
    }

    fn __repr__(&self) -> String {
        let b = &self.0;
        format!("Block(lambda={}, B={}, L={}, d={}, D={}, U={})", b.lambda, b.height, b.layers, b.depth, b.spacing, b.base_shift)
    }
}

fn cutoff(n: Option<u128>, log2_n: Option<u64>) -> PyResult<Cutoff> {
    match (n, log2_n) {
        (Some(n), None) => Ok(Cutoff::Exact(n)),
        (None, Some(e)) => Ok(Cutoff::Pow2(e)),
        _ => Err(PyValueError::new_err("give exactly one of n, log2_n")),
    }
}

/// A trial: exponents `M + D, ..., M + ell D`.
#[pyclass(name = "Trial", frozen)]
struct PyTrial(TrialSpec);

#[pymethods]
impl PyTrial {
    #[new]
    fn new(start: i64, length: u64) -> Self {
        PyTrial(TrialSpec::new(start, length))
    }

    #[getter]
    fn start(&self) -> i64 {
        self.0.start
    }

    #[getter]
    fn length(&self) -> u64 {
        self.0.len
    }
}

/// A built master construction.
#[pyclass(name = "Manifest", frozen)]
struct PyManifest {
    inner: Manifest,
    notes: Vec<String>,
}

#[pymethods]
impl PyManifest {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Manifest::from_json(text).map(|inner| PyManifest { inner, notes: Vec::new() }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn regime(&self) -> &str {
        &self.inner.regime
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    /// Build notes, such as per-stage feasibility reports.
    #[getter]
    fn notes(&self) -> Vec<String> {
        self.notes.clone()
    }

    fn blocks(&self) -> Vec<PyBlock> {
        self.inner.stages.iter().map(|s| PyBlock(s.block)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.stages.len()
    }

    /// Per-stage summary dictionaries.
    fn stages<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .stages
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("k", s.k)?;
                d.set_item("block", PyBlock(s.block))?;
                d.set_item("lengths", s.lengths.clone())?;
                d.set_item("starts", s.starts.clone())?;
                d.set_item("endpoints", s.endpoints.clone())?;
                d.set_item("E", s.threshold_log2)?;
                d.set_item("N_star", s.n_star)?;
                d.set_item("relaxed", s.config.relaxed.clone())?;
                Ok(d)
            })
            .collect()
    }

    /// First `n` selected exponents.
    fn exponents(&self, n: u64) -> PyResult<Vec<u64>> {
        self.inner.exponent_prefix(n).map_err(err)
    }

    #[pyo3(signature = (seed, shift=0))]
    fn f(&self, py: Python<'_>, seed: u64, shift: u64) -> PyResult<f64> {
        py.detach(|| f_eval(&self.inner, &BitTape::new(seed), shift)).map_err(err)
    }

    /// `N^-1 sum_{j <= N} f(2^(m_j) x)`, evaluated directly.
    fn average(&self, py: Python<'_>, seed: u64, n: u64) -> PyResult<f64> {
        py.detach(|| average_at(&self.inner, &BitTape::new(seed), n)).map_err(err)
    }

    /// `(stage, trial)` pairs, 0-based, whose good event holds on the tape.
    fn good_trials(&self, py: Python<'_>, seed: u64) -> PyResult<Vec<(usize, usize)>> {
        py.detach(|| HitProfile::new(&self.inner, &BitTape::new(seed)).map(|p| p.good_trials())).map_err(err)
    }

    /// `(total, bound)` of `||f - S_N f||^2` at `N = 2^log2_n`.
    fn tail(&self, log2_n: u64) -> PyResult<(f64, f64)> {
        let row = f_tail(&self.inner.blocks(), Cutoff::Pow2(log2_n)).map_err(err)?;
        Ok((row.total, row.bound))
    }

    fn structural_ok(&self) -> bool {
        self.inner.structural_suite().iter().all(|c| c.ok)
    }

    fn __repr__(&self) -> String {
        format!("Manifest(regime={:?}, stages={})", self.inner.regime, self.inner.stages.len())
    }
}

/// A built bounded hitting-set construction.
#[pyclass(name = "HitSet", frozen)]
struct PyHitSet(HitSetManifest);

#[pymethods]
impl PyHitSet {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        HitSetManifest::from_json(text).map(PyHitSet).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }

    /// The exact measure bound as a `p/q` string.
    fn measure_bound(&self) -> String {
        self.0.measure_bound().to_string()
    }

    fn measure_ok(&self) -> bool {
        self.0.measure_bound_ok()
    }

    /// Whether `2^shift x` lies in the hitting set.
    #[pyo3(signature = (seed, shift=0))]
    fn contains(&self, seed: u64, shift: u64) -> PyResult<bool> {
        bounded_membership(&self.0, &BitTape::new(seed), shift).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.stages.len()
    }
}

/// Rows of a verification run.
#[pyclass(name = "Report", frozen)]
struct PyReport(Report);

#[pymethods]
impl PyReport {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Report::from_csv(text).map(PyReport).map_err(err)
    }

    fn passed(&self) -> bool {
        self.0.passed()
    }

    fn summary(&self) -> String {
        self.0.summary()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    /// `(claim, verdict, observed, relation, bound, detail)` per row.
    fn rows(&self) -> Vec<(String, String, f64, String, f64, String)> {
        self.0
            .rows
            .iter()
            .map(|r| (r.claim.clone(), r.verdict.to_string(), r.observed, r.relation.to_string(), r.bound, r.detail.clone()))
            .collect()
    }

    fn failures(&self) -> Vec<String> {
        self.0.failures().iter().map(|r| format!("{}: {}", r.claim, r.detail)).collect()
    }

    fn __len__(&self) -> usize {
        self.0.rows.len()
    }
}

/// Builds a construction from TOML config text.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn build(py: Python<'_>, config: &str, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let mut cfg = RegimeConfig::from_toml(config).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    match py.detach(|| cfg.build()).map_err(err)? {
        Built::Master { manifest, notes } => Ok(Py::new(py, PyManifest { inner: manifest, notes })?.into_any()),
        Built::Bounded(hm) => Ok(Py::new(py, PyHitSet(hm))?.into_any()),
    }
}

/// Runs the property suite on a `Manifest` or `HitSet`.
#[pyfunction]
#[pyo3(signature = (built, samples=4000, seed=None, tolerance=4.0, core=true))]
fn verify(py: Python<'_>, built: &Bound<'_, PyAny>, samples: u64, seed: Option<u64>, tolerance: f64, core: bool) -> PyResult<PyReport> {
    let target = if let Ok(m) = built.extract::<PyRef<'_, PyManifest>>() {
        Built::Master { manifest: m.inner.clone(), notes: Vec::new() }
    } else if let Ok(h) = built.extract::<PyRef<'_, PyHitSet>>() {
        Built::Bounded(h.0.clone())
    } else {
        return Err(PyValueError::new_err("expected a Manifest or HitSet"));
    };
    let default_seed = match &target {
        Built::Master { manifest, .. } => manifest.seed,
        Built::Bounded(hm) => hm.seed,
    };
    let cfg = RunConfig { seed: seed.unwrap_or(default_seed), samples, z: tolerance, core, ..RunConfig::default() };
    py.detach(|| verify_built(&target, &cfg)).map(PyReport).map_err(err)
}

/// The unique `d` with `64 B^2 L / lambda <= 2^d < 128 B^2 L / lambda`.
#[pyfunction]
fn choose_depth(lam: f64, height: f64, layers: u64) -> PyResult<u32> {
    spikeblock::choose_depth(lam, height, layers).map_err(err)
}

/// `(hits, samples, lo, hi)` for the event that the spike of depth `d` at
/// `2^v x` takes its high value.
#[pyfunction]
#[pyo3(signature = (d, samples, seed, v=0))]
fn spike_law(py: Python<'_>, d: u32, samples: u64, seed: u64, v: u64) -> PyResult<(u64, u64, f64, f64)> {
    let sp = SpikeParams::new(d).map_err(err)?;
    let e = py.detach(|| spikeblock::mc_estimate(|t| spike_eval(&sp, t, v).map(|x| x == sp.h).unwrap_or(false), samples, seed)).map_err(err)?;
    Ok((e.hits, e.samples, e.lo, e.hi))
}

/// Admissibility of a modulus given on the scale `u = log log N`.
#[pyfunction]
#[pyo3(signature = (omega_u, max_log2=200))]
fn admissible<'py>(py: Python<'py>, omega_u: &Bound<'py, PyAny>, max_log2: u32) -> PyResult<Bound<'py, PyDict>> {
    let call = |u: f64| omega_u.call1((u,)).and_then(|v| v.extract::<f64>()).unwrap_or(f64::NAN);
    let r = admissible_check(&call, max_log2).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("admissible", r.admissible)?;
    d.set_item("c_omega", r.c_omega)?;
    d.set_item("growth", r.growth())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "spikeblock")]
fn spikeblock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpike>()?;
    m.add_class::<PyBlock>()?;
    m.add_class::<PyTrial>()?;
    m.add_class::<PyManifest>()?;
    m.add_class::<PyHitSet>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(choose_depth, m)?)?;
    m.add_function(wrap_pyfunction!(spike_law, m)?)?;
    m.add_function(wrap_pyfunction!(admissible, m)?)?;
    m.add("SEED_ENV", spikeblock::SEED_ENV)?;
    Ok(())
}
