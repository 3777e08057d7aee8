//! Python bindings for the `sicfsa` crate.
//!
//! Matrices cross the boundary as nested lists: allocations as N rows of K
//! probabilities, channels as separate real and imaginary antenna-by-device
//! arrays.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sicfsa::baselines::{aloha_structured, greedy_baseline, DEFAULT_POWER_LEVELS};
use sicfsa::model::{
    stream, ActivityVector, AllocationMatrix, ChannelMatrix, Network as CoreNetwork, Scenario as CoreScenario,
    Stream,
};
use sicfsa::objective::{conditional_objective, mc_expected_objective, smoothed_conditional_objective};
use sicfsa::optim::{initial_parameters, optimize as core_optimize, project_simplex as core_project, OptimizeOptions};
use sicfsa::powerred::reduce_power as core_reduce;
use sicfsa::runner::{builtin_scenario, evaluate as core_evaluate, run_experiment, ExperimentConfig, Method};

fn err(e: sicfsa::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One network configuration; mirrors the scenario JSON keys.
#[pyclass(module = "pysicfsa", from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// Built-in scenario 1..4.
    #[staticmethod]
    fn builtin(index: usize) -> PyResult<Self> {
        builtin_scenario(index).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreScenario::from_json_str(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n_devices(&self) -> usize {
        self.inner.n_devices
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.n_slots
    }

    #[getter]
    fn activity(&self) -> Vec<f64> {
        self.inner.activity.clone()
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }

    #[setter]
    fn set_n_frames(&mut self, frames: usize) {
        self.inner.n_frames = frames;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_devices={}, n_slots={}, activity={:?})",
            self.inner.n_devices, self.inner.n_slots, self.inner.activity
        )
    }
}

/// A scenario bound to one channel draw.
#[pyclass(module = "pysicfsa", from_py_object)]
#[derive(Clone)]
pub struct Network {
    inner: CoreNetwork,
}

impl Network {
    fn alloc(&self, a: Vec<Vec<f64>>) -> PyResult<AllocationMatrix> {
        let alloc = AllocationMatrix::new(a).map_err(err)?;
        if alloc.n_devices() != self.inner.n_devices() || alloc.n_slots() != self.inner.n_slots() {
            return Err(PyValueError::new_err(format!(
                "allocation is {}x{}, network is {}x{}",
                alloc.n_devices(),
                alloc.n_slots(),
                self.inner.n_devices(),
                self.inner.n_slots()
            )));
        }
        Ok(alloc)
    }

    fn power(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.power(p).map(|v| v.values().to_vec()).map_err(err)
    }
}

#[pymethods]
impl Network {
    /// Draws a feasible Rayleigh channel for `scenario` from `seed`.
    #[staticmethod]
    fn draw(scenario: &Scenario, seed: u64) -> PyResult<Self> {
        CoreNetwork::draw(scenario.inner.clone(), seed).map(|inner| Self { inner }).map_err(err)
    }

    /// Builds a network from an explicit channel (antennas x devices).
    #[staticmethod]
    fn from_channel(scenario: &Scenario, h_real: Vec<Vec<f64>>, h_imag: Vec<Vec<f64>>) -> PyResult<Self> {
        let channel = ChannelMatrix::from_parts(&h_real, &h_imag).map_err(err)?;
        CoreNetwork::new(scenario.inner.clone(), channel).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn scenario(&self) -> Scenario {
        Scenario { inner: self.inner.scenario.clone() }
    }

    #[getter]
    fn p_min(&self) -> Vec<f64> {
        self.inner.p_min.clone()
    }

    /// (H_real, H_imag), each antennas x devices.
    fn channel(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.inner.channel.to_parts()
    }

    /// (normalized expected objective, expected transmit power).
    fn evaluate(&self, a: Vec<Vec<f64>>, p: Vec<f64>) -> PyResult<(f64, f64)> {
        let alloc = self.alloc(a)?;
        let p = self.power(p)?;
        core_evaluate(&alloc, &p, &self.inner).map_err(err)
    }

    /// Expected decoded count given which devices are active.
    fn conditional_objective(&self, a: Vec<Vec<f64>>, p: Vec<f64>, active: Vec<bool>) -> PyResult<f64> {
        let alloc = self.alloc(a)?;
        let p = self.power(p)?;
        Ok(conditional_objective(&alloc, &p, &ActivityVector::new(active), &self.inner).value)
    }

    fn smoothed_objective(&self, a: Vec<Vec<f64>>, p: Vec<f64>, active: Vec<bool>) -> PyResult<f64> {
        let alloc = self.alloc(a)?;
        let p = self.power(p)?;
        Ok(smoothed_conditional_objective(&alloc, &p, &ActivityVector::new(active), &self.inner))
    }

    /// Monte-Carlo estimate of the expected decoded count: (mean, standard error).
    fn monte_carlo(&self, a: Vec<Vec<f64>>, p: Vec<f64>, n_frames: usize, seed: u64) -> PyResult<(f64, f64)> {
        let alloc = self.alloc(a)?;
        let p = self.power(p)?;
        let activity = self.inner.scenario.activity.clone();
        mc_expected_objective(&alloc, &p, &activity, &self.inner, n_frames, &mut stream(seed, Stream::Evaluation))
            .map_err(err)
    }

    /// SIC on one set of devices: (decoding order, stage SINRs, decoded count).
    fn sic_decode(&self, devices: Vec<usize>, p: Vec<f64>) -> PyResult<(Vec<usize>, Vec<f64>, usize)> {
        let n = self.inner.n_devices();
        if let Some(&bad) = devices.iter().find(|&&d| d >= n) {
            return Err(PyValueError::new_err(format!("device {bad} out of range for {n} devices")));
        }
        let p = self.power(p)?;
        let s = &self.inner.scenario;
        let out = sicfsa::sic_decode(&devices, &p, &self.inner.channel, s.noise_power, s.sinr_threshold);
        Ok((out.ordered_devices, out.stage_sinr, out.n_decoded))
    }

    /// Optimizes (A, P) with `method` "alg1" or "alg1+l1". Returns a dict
    /// with keys A, P and trace (list of (frame, smoothed_sample, mean_power)).
    #[pyo3(signature = (method = "alg1", seed = None, n_frames = None))]
    fn optimize<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        seed: Option<u64>,
        n_frames: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let method: Method = method.parse().map_err(err)?;
        let mut opts = OptimizeOptions::from_network(&self.inner);
        match method {
            Method::Alg1 => opts = opts.without_l1(),
            Method::Alg1L1 => {}
            other => return Err(PyValueError::new_err(format!("optimize runs alg1 or alg1+l1, not {other}"))),
        }
        if let Some(frames) = n_frames {
            opts.n_frames = frames;
        }
        let seed = seed.unwrap_or(self.inner.scenario.seed);
        let (a0, p0) = initial_parameters(&self.inner, seed);
        let net = &self.inner;
        let out = py
            .detach(|| core_optimize(net, &a0, &p0, &opts, &mut stream(seed, Stream::Activity), &mut |_| {}))
            .map_err(err)?;
        let trace: Vec<(usize, f64, f64)> =
            out.trace.records.iter().map(|r| (r.frame, r.smoothed_sample, r.mean_power)).collect();
        let d = PyDict::new(py);
        d.set_item("A", out.alloc.to_rows())?;
        d.set_item("P", out.power.values().to_vec())?;
        d.set_item("trace", trace)?;
        Ok(d)
    }

    /// Lowers P without losing any decodable configuration.
    fn reduce_power(&self, a: Vec<Vec<f64>>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        let alloc = self.alloc(a)?;
        let p = self.inner.power(p).map_err(err)?;
        core_reduce(&alloc, &p, &self.inner).map(|v| v.values().to_vec()).map_err(err)
    }

    /// Baseline (A, P) for kind "aloha" or "greedy".
    #[pyo3(signature = (kind, n_levels = DEFAULT_POWER_LEVELS))]
    fn baseline(&self, kind: &str, n_levels: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let s = &self.inner.scenario;
        let (a, p) = match kind {
            "aloha" => aloha_structured(s.n_slots, &self.inner.p_min, s.p_max, n_levels),
            "greedy" => greedy_baseline(&s.activity, s.n_slots, &self.inner.p_min, s.p_max, n_levels),
            other => return Err(PyValueError::new_err(format!("unknown baseline `{other}`"))),
        }
        .map_err(err)?;
        Ok((a.to_rows(), p.values().to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("Network(n_devices={}, p_min={:?})", self.inner.n_devices(), self.inner.p_min)
    }
}

/// Euclidean projection of one row onto the probability simplex.
#[pyfunction]
fn project_simplex(mut row: Vec<f64>) -> Vec<f64> {
    core_project(&mut row);
    row
}

/// Runs methods x built-in scenarios x seeds in memory. Returns one dict per
/// cell with the results.csv columns.
#[pyfunction]
#[pyo3(signature = (n_seeds, n_frames = None, scenarios = None, methods = None))]
fn run<'py>(
    py: Python<'py>,
    n_seeds: usize,
    n_frames: Option<usize>,
    scenarios: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = ExperimentConfig::paper_defaults(std::env::temp_dir(), n_seeds);
    if let Some(ids) = scenarios {
        config.scenarios.retain(|s| ids.iter().any(|id| id.to_string() == s.id));
    }
    if let Some(names) = methods {
        config.methods = names.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(err)?;
    }
    if let Some(frames) = n_frames {
        config.scenarios.iter_mut().for_each(|s| s.scenario.n_frames = frames);
    }
    config.validate().map_err(err)?;
    let outcome = py.detach(|| run_experiment(&config)).map_err(err)?;
    if let Some(f) = outcome.failures.first() {
        return Err(PyValueError::new_err(format!(
            "scenario {} {} seed {}: {}",
            f.scenario_id, f.method, f.seed, f.error
        )));
    }
    outcome
        .records()
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("scenario", r.scenario_id)?;
            d.set_item("method", r.method.name())?;
            d.set_item("seed", r.seed)?;
            d.set_item("t_normalized", r.t_normalized)?;
            d.set_item("expected_power", r.expected_power)?;
            d.set_item("wall_time_s", r.wall_time)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pysicfsa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(project_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
