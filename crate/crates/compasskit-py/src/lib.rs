//! Python bindings: scenario-driven search, planning, and simulation, plus
//! the scalar threshold/interval helpers. Structured results are returned as
//! JSON strings; `json.loads` them on the Python side.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use compasskit::error::Error;
use compasskit::report::{
    build_front, feasible_pairs, feasible_set_file, front_file, policy_for_slo,
};
use compasskit::search::compass_v_search;
use compasskit::sim::{
    compute_metrics, generate_arrivals, run_simulation, rungs_from_policy, LoadPattern,
    PatternKind, SimOptions,
};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::InvalidScenario(_) | Error::InvalidSpace(_) | Error::SloInfeasible(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// A loaded scenario: the configuration space, accuracy oracle, service
/// model, and stage defaults, ready to run pipeline stages in-process.
#[pyclass]
struct Scenario {
    inner: compasskit::scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[new]
    fn new(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: compasskit::scenario::Scenario::load(path).map_err(to_py_err)?,
        })
    }

    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Number of configurations in the lattice after exclusions.
    fn cardinality(&self) -> usize {
        self.inner.space.cardinality()
    }

    /// Thresholds listed in the scenario's evaluation section.
    fn taus(&self) -> Vec<f64> {
        self.inner.taus.clone()
    }

    /// Runs the feasible-configuration search at one threshold and returns
    /// the feasible set as JSON.
    #[pyo3(signature = (tau, seed = 45))]
    fn search(&self, tau: f64, seed: u64) -> PyResult<String> {
        let outcome = self.run_search(tau, seed)?;
        to_json(&feasible_set_file(&self.inner, &outcome, seed))
    }

    /// Searches, profiles, builds the Pareto front, and derives the
    /// switching policy for one SLO. Returns the policy as JSON.
    #[pyo3(signature = (tau, slo_ms, seed = 45))]
    fn plan(&self, tau: f64, slo_ms: f64, seed: u64) -> PyResult<String> {
        let outcome = self.run_search(tau, seed)?;
        if outcome.feasible.is_empty() {
            return Err(PyValueError::new_err(format!(
                "no feasible configurations at tau {tau}"
            )));
        }
        let front = build_front(&self.inner, &feasible_pairs(&outcome), seed).map_err(to_py_err)?;
        let policy = policy_for_slo(&self.inner, &front, slo_ms).map_err(to_py_err)?;
        to_json(&policy)
    }

    /// The Pareto front behind a policy, as JSON.
    #[pyo3(signature = (tau, seed = 45))]
    fn front(&self, tau: f64, seed: u64) -> PyResult<String> {
        let outcome = self.run_search(tau, seed)?;
        let front = build_front(&self.inner, &feasible_pairs(&outcome), seed).map_err(to_py_err)?;
        to_json(&front_file(&self.inner, tau, &front))
    }

    /// Replays a load pattern against a policy JSON (as produced by `plan`)
    /// and returns the run metrics as JSON. `static_entry` pins one rung.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (policy_json, pattern, seed = 45, base_qps = None, duration_s = None, slo_ms = None, static_entry = None))]
    fn simulate(
        &self,
        policy_json: &str,
        pattern: &str,
        seed: u64,
        base_qps: Option<f64>,
        duration_s: Option<f64>,
        slo_ms: Option<f64>,
        static_entry: Option<usize>,
    ) -> PyResult<String> {
        let policy: compasskit::planner::SwitchingPolicy =
            serde_json::from_str(policy_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let rungs = rungs_from_policy(&policy, &self.inner.space).map_err(to_py_err)?;

        let kind: PatternKind = pattern.parse().map_err(to_py_err)?;
        let mut load = LoadPattern::with_kind(
            kind,
            base_qps.unwrap_or(self.inner.simulation.base_qps),
            duration_s.unwrap_or(self.inner.simulation.duration_s),
        );
        load.spike_multiplier = self.inner.simulation.spike_multiplier;

        let mut options = SimOptions::from_policy(&policy);
        options.switch_latency_ms = self.inner.simulation.switch_latency_ms;
        options.static_entry = static_entry;

        let arrivals = generate_arrivals(&load, seed).map_err(to_py_err)?;
        let trace = run_simulation(
            &self.inner.space,
            &self.inner.service_model,
            &rungs,
            &arrivals,
            &options,
            seed,
        )
        .map_err(to_py_err)?;
        to_json(&compute_metrics(&trace, slo_ms.unwrap_or(policy.slo_ms)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name='{}', configurations={})",
            self.inner.name,
            self.inner.space.cardinality()
        )
    }
}

impl Scenario {
    fn run_search(&self, tau: f64, seed: u64) -> PyResult<compasskit::search::SearchOutcome> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(PyValueError::new_err(format!(
                "tau {tau} must lie strictly inside (0, 1)"
            )));
        }
        let params = self.inner.search_params(tau);
        compass_v_search(
            &self.inner.space,
            &self.inner.oracle,
            &params,
            &self.inner.schedule,
            seed,
        )
        .map_err(to_py_err)
    }
}

/// Wilson score interval for a binomial proportion.
#[pyfunction]
fn wilson_interval(successes: u64, trials: u64, z: f64) -> PyResult<(f64, f64)> {
    compasskit::eval::wilson_interval(successes, trials, z).map_err(to_py_err)
}

/// Maximum queue depth a configuration absorbs while meeting the SLO:
/// floor((slo - p95) / mean).
#[pyfunction]
fn upscale_threshold(slo_ms: f64, p95_ms: f64, mean_ms: f64) -> PyResult<u64> {
    if !(slo_ms - p95_ms).is_finite() || slo_ms - p95_ms <= 0.0 || mean_ms <= 0.0 {
        return Err(PyValueError::new_err(
            "requires slo_ms > p95_ms and mean_ms > 0",
        ));
    }
    Ok(compasskit::planner::upscale_threshold(slo_ms, p95_ms, mean_ms))
}

/// Queue depth below which the next (slower, more accurate) rung can take
/// over: floor((next_slack - buffer) / next_mean), clamped at zero.
#[pyfunction]
fn downscale_threshold(next_slack_ms: f64, slack_buffer_ms: f64, next_mean_ms: f64) -> PyResult<u64> {
    if !next_slack_ms.is_finite() || next_mean_ms <= 0.0 || slack_buffer_ms < 0.0 {
        return Err(PyValueError::new_err(
            "requires next_mean_ms > 0 and slack_buffer_ms >= 0",
        ));
    }
    Ok(compasskit::planner::downscale_threshold(
        next_slack_ms,
        slack_buffer_ms,
        next_mean_ms,
    ))
}

/// Probability that at least one of n seeds lands in a feasible region of
/// the given fraction.
#[pyfunction]
fn seeding_probability(feasible_fraction: f64, n_init: usize) -> f64 {
    compasskit::search::seeding_probability(feasible_fraction, n_init)
}

/// Pollaczek-Khinchine mean wait for an M/G/1 queue.
#[pyfunction]
fn pollaczek_khinchine_wait(lambda: f64, mean_service: f64, second_moment: f64) -> PyResult<f64> {
    if lambda * mean_service >= 1.0 {
        return Err(PyValueError::new_err("queue is unstable (rho >= 1)"));
    }
    Ok(compasskit::sim::pollaczek_khinchine_wait(
        lambda,
        mean_service,
        second_moment,
    ))
}

#[pymodule]
fn compasskit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(upscale_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(downscale_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(seeding_probability, m)?)?;
    m.add_function(wrap_pyfunction!(pollaczek_khinchine_wait, m)?)?;
    Ok(())
}
